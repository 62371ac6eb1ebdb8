use ioncavity::lindblad::{integrate, DensityMatrix, EvolutionRecord};
use ioncavity::ode::Tolerance;
use ioncavity::params::{khz, mhz};
use ioncavity::sequence::{PulseSequence, Segment};
use ioncavity::SystemParams;
use proptest::prelude::*;

fn short() -> PulseSequence {
    PulseSequence {
        segments: vec![
            Segment::new("drive", 4.0, true, false),
            Segment::new("wait", 1.0, false, false),
            Segment::new("reset", 0.5, false, true),
        ],
    }
}

fn check(rec: &EvolutionRecord) -> Result<(), TestCaseError> {
    let d = rec.diagnostics;
    prop_assert!(d.max_trace_error < 1e-9, "trace error {}", d.max_trace_error);
    prop_assert!(d.max_hermiticity_deviation < 1e-12, "hermiticity {}", d.max_hermiticity_deviation);
    prop_assert!(d.min_eigenvalue > -1e-8, "min eigenvalue {}", d.min_eigenvalue);
    for p in &rec.populations {
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|v| *v > -1e-9));
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn density_matrix_stays_physical(
        omega in 5.0f64..60.0,
        offset in -300.0f64..300.0,
        linewidth in 0.0f64..200.0,
        infidelity in 0.0f64..0.1,
        dark in proptest::bool::ANY,
    ) {
        let mut p = SystemParams::standard();
        p.omega_drive = mhz(omega);
        p.raman_offset = khz(offset);
        p.drive_linewidth = khz(linewidth);
        p.pump_infidelity = infidelity;
        if dark {
            p = p.with_dark_level(Some(2.0)).unwrap();
        }
        let rho0 = DensityMatrix::initial(&p).unwrap();
        let rec = integrate(&p, &short(), &rho0, 0.1, Tolerance::default()).unwrap();
        check(&rec)?;
        let f = rec.final_state.matrix();
        prop_assert!((f.trace().re - 1.0).abs() < 1e-9);
    }
}

#[test]
fn efficiency_is_bounded_by_excitation() {
    let p = SystemParams::standard();
    let rec = integrate(&p, &short(), &DensityMatrix::initial(&p).unwrap(), 0.1, Tolerance::default()).unwrap();
    let e = rec.efficiency();
    assert!(e > 0.0 && e < 1.0, "{e}");
}
