"""Regenerate src/ibchan/data/tissue_dielectric.csv.

Evaluates the standard four-dispersion Cole-Cole parametrization of tissue
dielectric spectra (the parametric model behind the public IT'IS/Gabriel
low-frequency tissue database) on a log-spaced frequency grid:

    eps_c(w) = eps_inf + sum_i d_eps_i / (1 + (j w tau_i)^(1 - alpha_i))
               + sigma_s / (j w eps_0)

    eps_r(w)  = Re(eps_c)
    sigma(w)  = -w eps_0 Im(eps_c)

Run from the repository root:  python3 tools/make_tissue_table.py
"""

import csv
import pathlib

import numpy as np

EPS0 = 8.8541878128e-12

# name -> (eps_inf, (d_eps_i), (tau_i seconds), (alpha_i), sigma_static S/m)
COLE_COLE = {
    "Skin": (
        4.0,
        (32.0, 1100.0, 0.0, 0.0),
        (7.234e-12, 32.481e-9, 159.155e-6, 15.915e-3),
        (0.00, 0.20, 0.20, 0.20),
        0.0002,
    ),
    "Fat": (
        2.5,
        (9.0, 35.0, 3.3e4, 1.0e7),
        (7.958e-12, 15.915e-9, 159.155e-6, 15.915e-3),
        (0.20, 0.10, 0.05, 0.01),
        0.035,
    ),
    "Muscle": (
        4.0,
        (50.0, 7000.0, 1.2e6, 2.5e7),
        (7.234e-12, 353.678e-9, 318.310e-6, 2.274e-3),
        (0.10, 0.10, 0.10, 0.00),
        0.20,
    ),
    "Cortical Bone": (
        2.5,
        (10.0, 180.0, 5.0e3, 1.0e5),
        (13.263e-12, 79.577e-9, 159.155e-6, 15.915e-3),
        (0.20, 0.20, 0.20, 0.00),
        0.02,
    ),
    "Cancellous Bone": (
        2.5,
        (18.0, 300.0, 2.0e4, 2.0e7),
        (13.263e-12, 79.577e-9, 159.155e-6, 15.915e-3),
        (0.22, 0.25, 0.20, 0.00),
        0.07,
    ),
}


def complex_permittivity(name, freq_hz):
    eps_inf, d_eps, tau, alpha, sigma_s = COLE_COLE[name]
    w = 2.0 * np.pi * np.asarray(freq_hz, dtype=np.float64)
    eps = np.full_like(w, eps_inf, dtype=np.complex128)
    for de, t, a in zip(d_eps, tau, alpha):
        eps += de / (1.0 + (1j * w * t) ** (1.0 - a))
    eps += sigma_s / (1j * w * EPS0)
    return eps


def main():
    out = pathlib.Path(__file__).resolve().parents[1] / "src" / "ibchan" / "data"
    out.mkdir(parents=True, exist_ok=True)
    freqs = np.logspace(2, 8, 25 * 6 + 1)  # 100 Hz .. 100 MHz, 25 pts/decade
    path = out / "tissue_dielectric.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frequency_hz", "tissue_name", "sigma_s_per_m", "eps_r"])
        for name in COLE_COLE:
            eps = complex_permittivity(name, freqs)
            sigma = -2.0 * np.pi * freqs * EPS0 * eps.imag
            eps_r = eps.real
            for f, s, e in zip(freqs, sigma, eps_r):
                writer.writerow([f"{f:.6e}", name, f"{s:.6e}", f"{e:.6e}"])
    print(f"wrote {path}")
    for name in COLE_COLE:
        eps = complex_permittivity(name, 100e3)
        print(f"{name:16s} @100kHz: sigma={-2*np.pi*100e3*EPS0*eps.imag:.4f} S/m"
              f"  eps_r={eps.real:.1f}")


if __name__ == "__main__":
    main()
