"""Regenerates the bundled synthetic realistic-day CSVs.

The shipped profiles imitate the shape of a winter substation day (double
demand peak, midday PV bell) but are synthetic: smooth analytic curves
plus seeded, smoothed noise.  26 hours of data at 5-minute slots so a
2-hour horizon stays fully forecast through the end of a 24-hour run.
"""

from pathlib import Path

import numpy as np

OUT_DIR = Path(__file__).resolve().parent.parent / "src" / "bessmpc" / "data"
SLOT_H = 1.0 / 12.0
N = 26 * 12  # 26 hours


def bell(t, center, width):
    return np.exp(-((t - center) ** 2) / (2.0 * width ** 2))


def smooth_noise(rng, n, sigma_slots, scale):
    raw = rng.normal(0.0, 1.0, n)
    k = np.arange(-4 * sigma_slots, 4 * sigma_slots + 1)
    kernel = np.exp(-(k ** 2) / (2.0 * sigma_slots ** 2))
    kernel /= kernel.sum()
    return scale * np.convolve(raw, kernel, mode="same")


def main():
    t = SLOT_H * np.arange(N)
    rng = np.random.default_rng(20150221)

    demand = (
        38.0
        + 10.0 * bell(t, 9.5, 2.2)
        + 6.0 * bell(t, 13.0, 3.5)
        + 14.0 * bell(t, 19.5, 1.8)
        - 4.0 * bell(t, 3.5, 2.5)
        + smooth_noise(rng, N, 2.0, 0.5)
    )
    demand = np.maximum(demand, 20.0)

    window = np.maximum(0.0, np.sin(np.pi * (t - 7.3) / (17.2 - 7.3)))
    window[(t < 7.3) | (t > 17.2)] = 0.0
    pv = 6.2 * window ** 1.6
    pv += np.where(pv > 0.3, smooth_noise(rng, N, 2.0, 0.25), 0.0)
    pv = np.maximum(pv, 0.0)

    OUT_DIR.mkdir(parents=True, exist_ok=True)
    for name, series in (("realistic_day_demand.csv", demand),
                         ("realistic_day_pv.csv", pv)):
        path = OUT_DIR / name
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("timestamp,power_mw\n")
            for ti, vi in zip(t, series):
                handle.write(f"{float(ti)!r},{float(vi):.6f}\n")
        print(f"wrote {path} ({N} rows)")


if __name__ == "__main__":
    main()
