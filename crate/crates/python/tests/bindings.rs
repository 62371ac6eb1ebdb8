use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

#[test]
fn bad_config_raises_value_error() {
    Python::attach(|py| {
        let err = pyioncavity::validate_config(Some("[run]\nn_trials = 0\n")).unwrap_err();
        assert!(err.is_instance_of::<PyValueError>(py));
        assert!(err.to_string().contains("n_trials"));
    });
}

#[test]
fn effective_rabi_matches_hand_value() {
    let eff = pyioncavity::effective_parameters(None).unwrap();
    let khz = eff["omega_eff"] / std::f64::consts::TAU * 1e3;
    assert!((khz - 71.64).abs() < 0.01, "{khz}");
}

#[test]
fn trajectory_is_reproducible() {
    let a = pyioncavity::trajectory(3, 11, None).unwrap();
    assert_eq!(a, pyioncavity::trajectory(3, 11, None).unwrap());
}
