"""Independent reference implementations used only by the test-suite."""

import mpmath

mpmath.mp.dps = 50


def q_mp(x):
    """Q(x) from mpmath's arbitrary-precision erfc."""
    x = mpmath.mpf(x)
    return mpmath.erfc(x / mpmath.sqrt(2)) / 2


def capacity_mp(rho):
    return mpmath.log(1 + mpmath.mpf(rho), 2)


def dispersion_mp(rho):
    rho = mpmath.mpf(rho)
    return mpmath.log(mpmath.e, 2) ** 2 * (1 - (1 + rho) ** -2)


def outage_mp(rho, b, m):
    """High-precision normal-approximation outage, returned as an mpf."""
    rho = mpmath.mpf(rho)
    c = capacity_mp(rho)
    v = dispersion_mp(rho)
    arg = (c - mpmath.mpf(b) / m) * mpmath.log(2) / mpmath.sqrt(v / m)
    return q_mp(arg), arg


# --- brute-force metric oracles -----------------------------------------

def scan_runs(flags):
    hist = {}
    run = 0
    for f in list(flags) + [False]:
        if f:
            run += 1
        elif run:
            hist[run] = hist.get(run, 0) + 1
            run = 0
    return hist


def replay_exceedance(flag_lists, limit):
    hits = steps = 0
    for flags in flag_lists:
        run = 0
        for f in flags:
            run = run + 1 if f else 0
            hits += run > limit
            steps += 1
    return hits / steps


def quadratic_front(points):
    def dom(p, q):
        return (p.energy <= q.energy and p.exceedance <= q.exceedance
                and (p.energy < q.energy or p.exceedance < q.exceedance))
    return [q for q in points if not any(dom(p, q) for p in points)]
