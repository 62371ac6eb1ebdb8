"""Regenerate dipole_amplitudes.csv from explicit Wigner 3-j symbols.

<j_l m_l; 1 q | j_u m_u> = (-1)^(j_l - 1 + m_u) sqrt(2 j_u + 1) (j_l 1 j_u; m_l q -m_u)
"""
from sympy import Rational, sqrt, N
from sympy.physics.wigner import wigner_3j

half = Rational(1, 2)
uppers = [-half, half]
lowers = {"S12": (half, [-half, half]), "D32": (3 * half, [-3 * half, -half, half, 3 * half])}

print("upper_m2,lower,lower_m2,q,amplitude")
for mu in uppers:
    for name, (jl, ms) in lowers.items():
        for ml in ms:
            for q in (-1, 0, 1):
                w = wigner_3j(jl, 1, half, ml, q, -mu)
                cg = (-1) ** (jl - 1 + mu) * sqrt(2 * half + 1) * w
                print(f"{int(2*mu)},{name},{int(2*ml)},{q},{float(N(cg, 20)):.17e}")
