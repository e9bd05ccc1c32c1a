"""Smoke test for the rclab_py extension module.

Build and install first:

    pip install maturin
    cd crates/python && maturin develop --release
"""

import math

import rclab_py as rc


def close(a, b, tol):
    return all(abs(x - y) <= tol for x, y in zip(a, b))


def main():
    assert set(rc.BUILTIN_SYSTEMS) >= {"central_force", "harmonic_oscillator"}

    ho = rc.System.load("harmonic_oscillator")
    assert ho.coords == ["q"] and not ho.is_reduced
    assert abs(ho.energy([1.0, 0.0]) - 0.5) < 1e-15
    # q'' = -q
    assert close(ho.field([0.3, 0.7]), [0.7, -0.3], 1e-12)
    p = ho.legendre([0.2, -1.1])
    assert close(ho.inverse_legendre(p[:1], p[1:]), [0.2, -1.1], 1e-12)
    omega = ho.two_form([0.2, -1.1])
    assert omega == [[0.0, 1.0], [-1.0, 0.0]]

    traj = ho.simulate([1.0, 0.0], t1=2 * math.pi, dt=1e-3)
    assert close(traj["states"][-1], [1.0, 0.0], 1e-6)
    assert max(abs(e - 0.5) for e in traj["energy"]) < 1e-9

    report = rc.System.load("central_force").check("all", samples=40)
    failed = [c["id"] for c in report["checks"] if c["status"] == "fail"]
    assert not failed, failed

    red = rc.System.load("central_force").reduce(mu=[1.0])
    assert red.is_reduced and red.coords == ["r"]
    # circular orbit at r = 1
    assert close(red.field([1.0, 0.0]), [0.0, 0.0], 1e-9)
    r = 1.7
    assert close(red.field([r, 0.2]), [0.2, 1 / r**3 - 1 / r**2], 1e-9)
    up = red.lift([r, 0.2])
    assert abs(r * r * up[3] - 1.0) < 1e-12

    cart = rc.System.load("pendulum_cart")
    assert cart.reduce(orbit=True).check("dynamics", samples=30)["checks"]

    good = rc.equivalence("translation_pair", "rpcl", samples=50)
    bad = rc.equivalence("translation_bad", "rpcl", samples=50)
    assert all(c["status"] == "pass" for c in good["checks"])
    assert any(c["status"] == "fail" for c in bad["checks"])
    thm = rc.equivalence("translation_bad", "thm44", samples=50)
    assert [c for c in thm["checks"] if c["id"] == "agreement"][0]["status"] == "pass"

    eps = [[[levi(i, j, k) for j in range(3)] for i in range(3)] for k in range(3)]
    assert rc.plus_form(eps, [0, 0, 1], [1, 0, 0], [0, 1, 0]) == 1.0

    try:
        rc.System.load("no_such_system")
    except ValueError as e:
        assert "no such file" in str(e)
    else:
        raise AssertionError("expected ValueError")

    print("python smoke test: ok")


def levi(i, j, k):
    return (i - j) * (j - k) * (k - i) / 2


if __name__ == "__main__":
    main()
