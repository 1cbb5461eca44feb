"""Smoke test for the loggas_py extension module.

Build and install with
    pip install --no-build-isolation ./crates/py
then run
    python python/smoke_test.py
"""

import math

import loggas_py as lg


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


def main():
    gue = lg.Ensemble.gue(6)
    assert gue.n == 6 and gue.gamma == 1.0
    same = lg.Ensemble.from_json(gue.to_json())
    assert same.content_hash() == gue.content_hash()

    k = lg.Kernel(gue)
    close(k.trace(), 6.0, 1e-8)
    lo, hi = k.extent()
    xs = [lo + (hi - lo) * i / 400 for i in range(401)]
    rho = k.density(xs, "unit")
    h = xs[1] - xs[0]
    close(sum(0.5 * h * (a + b) for a, b in zip(rho, rho[1:])), 1.0, 1e-4)
    m = k.matrix([-0.3, 0.0, 0.4])
    close(m[0][2], k.eval(-0.3, 0.4), 1e-14)

    table = k.gap_table(mode="unfold", smax=3.0, ds=0.02, order=24, levels=1)
    assert table["s"][0] == 0.0 and len(table["E"]) == 2
    close(table["p0_integral"], 1.0, 1e-3)
    close(table["mean_spacing"], 1.0, 0.02)

    lag = lg.Ensemble.mb_laguerre(4, 2.0, alpha=0.0, potential="x")
    close(lg.Kernel(lag).trace(), 4.0, 1e-8)
    samples, rate = lg.sample(lag, sweeps=2000, burn_in=200, seed=1)
    assert len(samples) == 1800 and 0.0 < rate < 1.0
    assert all(s == sorted(s) and s[0] >= 0.0 for s in samples)

    close(lg.sine_kernel(0.25, 0.25), 1.0, 1e-15)
    close(lg.sine_kernel(0.0, 0.5), 2.0 / math.pi, 1e-15)
    # θ = 1 hard-edge limit reduces to the Bessel kernel: K_L = 4 K_B(4x, 4y).
    close(lg.laguerre_limit_kernel(0.0, 1.0, 0.3, 0.7), 4.0 * lg.bessel_kernel(0.0, 1.2, 2.8), 1e-9)
    close(lg.semicircle(2.0, [0.0])[0], 1.0 / math.pi, 1e-15)
    close(lg.marchenko_pastur(1.0, 1.0, [1.0])[0], math.sqrt(3.0) / (2.0 * math.pi), 1e-15)

    try:
        lg.Ensemble.mb_laguerre(3, 2.0).with_gamma(0.8).with_gamma(-1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative gamma accepted")

    print("loggas_py smoke test passed")


if __name__ == "__main__":
    main()
