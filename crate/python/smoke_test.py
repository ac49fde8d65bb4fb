"""Smoke test for the Python bindings.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o /tmp/wheels
    pip install /tmp/wheels/poisson_calculus-*.whl

Expected values are recomputed here in plain Python from the definitions.
"""

import itertools
import math
import sys

import poisson_calculus as pc

WEIGHTS = [0.5, 1.0, 1.5]


def close(a, b, tol=1e-10):
    return abs(a - b) <= tol * max(1.0, abs(b))


def check(label, ok):
    print(f"{'ok  ' if ok else 'FAIL'} {label}")
    return ok


def poisson_pmf(lam, k):
    return math.exp(-lam) * lam**k / math.factorial(k)


def brute_expectation(f, cap=40):
    """E f(η) for independent Poisson counts, summed over a box."""
    total = 0.0
    for counts in itertools.product(range(cap), repeat=len(WEIGHTS)):
        p = 1.0
        for lam, k in zip(WEIGHTS, counts):
            p *= poisson_pmf(lam, k)
        total += p * f(counts)
    return total


def main():
    results = []
    space = pc.GroundSpace(WEIGHTS)
    results.append(check("canonical space", pc.GroundSpace.canonical().weights == WEIGHTS))
    results.append(check("total mass", close(space.total_mass, sum(WEIGHTS))))
    results.append(check("measure of {0, 2}", close(space.measure_of([0, 2]), 2.0)))
    results.append(
        check("json round trip", pc.GroundSpace.from_json(space.to_json()).weights == WEIGHTS)
    )

    square = pc.Functional(space, {"name": "poly_count", "degree": 2})
    count = pc.Functional(space, '{"name": "linear_count"}')
    first = pc.Functional(space, {"name": "linear_count", "B": [1]})
    results.append(check("F(1,0,2) = 9", close(square([1, 0, 2]), 9.0)))
    results.append(check("add diff", close(pc.add_diff(square, [1, 0, 2], 1), 16.0 - 9.0)))
    results.append(check("drop diff", close(pc.drop_diff(square, [1, 0, 2], 2), 9.0 - 4.0)))
    results.append(check("drop diff at empty site", pc.drop_diff(square, [1, 0, 2], 1) == 0.0))

    # δu for u(η, z) = c_z: Σ k_z c_z − Σ λ_z c_z.
    c = [1.0, -0.5, 2.0]
    u = pc.Field(space, {"name": "site_count", "values": c})
    eta = [2, 1, 3]
    want = sum(k * cz for k, cz in zip(eta, c)) - sum(l * cz for l, cz in zip(WEIGHTS, c))
    results.append(check("divergence", close(pc.divergence(space, u, eta), want)))

    # L N² = Σ λ (2N + 1) − Σ k (2N − 1).
    n = sum(eta)
    want = sum(WEIGHTS) * (2 * n + 1) - n * (2 * n - 1)
    results.append(check("ou generator", close(pc.ou_generator(space, square, eta), want)))

    # Γ(N_{site 0}, N_{site 0}) = (λ_0 + k_0) / 2.
    results.append(check("gamma", close(pc.gamma(space, first, first, [2, 0, 0]), 1.25)))
    d = pc.Field.derivative(count)
    plus = pc.bracket(space, d, d, "plus", eta)
    minus = pc.bracket(space, d, d, "minus", eta)
    results.append(check("plus bracket", close(plus, sum(WEIGHTS))))
    results.append(check("minus bracket", close(minus, n)))
    results.append(
        check("gamma bracket", close(pc.bracket(space, d, d, "gamma", eta), 0.5 * (plus + minus)))
    )

    engine = pc.ExactEngine(space)
    results.append(check("engine enumerates states", engine.state_count == len(engine.states())))
    e1 = engine.expectation(count)
    e2 = engine.expectation(square)
    mass = sum(WEIGHTS)
    results.append(check("E N", abs(e1["value"] - mass) <= 1e-10 + e1["error_bound"]))
    results.append(check("E N²", abs(e2["value"] - (mass + mass**2)) <= 1e-10 + e2["error_bound"]))

    sig = pc.Functional(space, {"name": "bounded_sigmoid", "scale": 0.7})
    brute = brute_expectation(lambda k: math.tanh(0.7 * sum(k)))
    got = engine.expectation(sig)
    results.append(check("E tanh(0.7 N) vs brute force", abs(got["value"] - brute) <= 1e-9))
    results.append(check("bounded functional certified", got["certified"]))

    two = pc.Functional(space, {"name": "linear_count", "B": [1, 2]})
    energy = engine.dirichlet_energy(two, two)
    results.append(check("dirichlet energy", abs(energy["value"] - 1.5) <= 1e-10 + energy["error_bound"]))

    # L⁻¹(N − E N) = −(N − E N), since L N = −(N − E N). States near the
    # truncation caps feel the boundary, so only low counts are compared.
    inv = engine.ou_pseudo_inverse(count)
    states = engine.states()
    worst = max(abs(v + (sum(s) - mass)) for v, s in zip(inv, states) if sum(s) <= 6)
    results.append(check("ou pseudo-inverse of N", worst < 1e-6))

    mc = pc.mc_expectation(space, square, seed=7, samples=50_000)
    again = pc.mc_expectation(space, square, seed=7, samples=50_000, workers=3)
    results.append(check("mc within 5 se", abs(mc["mean"] - 12.0) <= 5 * mc["std_error"]))
    # Same per-sample streams for any worker count; only the merge order differs.
    results.append(check("mc workers agree", close(mc["mean"], again["mean"], 1e-12) and mc["n"] == again["n"]))

    draws = pc.sample(space, 3, 5)
    results.append(check("sample shape", len(draws) == 5 and all(len(x) == 3 for x in draws)))
    results.append(check("sample reproducible", draws == pc.sample(space, 3, 5)))

    reports = pc.run_suite(backend="exact")
    results.append(check(f"exact suite ({len(reports)} reports)", all(r["pass"] for r in reports)))

    try:
        pc.Functional(space, {"name": "poly_count"})
        results.append(check("bad spec rejected", False))
    except ValueError:
        results.append(check("bad spec rejected", True))

    failed = results.count(False)
    print(f"{len(results) - failed} of {len(results)} checks passed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
