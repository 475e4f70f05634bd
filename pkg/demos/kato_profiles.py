"""Kato constants of boundary measures and the form bounds they imply.

For kappa = l s the constant K(t) vanishes like t^(1/2) as t -> 0, so the
measure belongs to the Kato class and is form bounded with any rho' > 0.
Run: python3 demos/kato_profiles.py
"""
import numpy as np

from tamedcalc import KatoMeasure, assemble, build_model, fit_form_bound, kato_constant

ts = np.array([0.1, 0.05, 0.02, 0.01])
for shape in ("interval", "disk"):
    s = build_model(shape, refinement=3)
    form = assemble(s)
    for level in (0.5, 1.0, 2.0):
        kap = KatoMeasure(s, 0.0, level)
        K = kato_constant(form, kap, ts)
        slope = np.polyfit(np.log(ts), np.log(K), 1)[0]
        bound = fit_form_bound(form, kap, 0.5)
        print(f"{shape:<8} l = {level:<4} K(t) = {np.array2string(K, precision=4)}  "
              f"slope {slope:.2f}  alpha' at rho' = 0.5: {bound.alpha_prime:.4f}")
