"""Independent reference computations used to freeze expected values.

Nothing here imports the code paths it checks.
"""

import math
from fractions import Fraction


def conv1d_params(kernel, in_ch, out_ch, bias=True):
    return kernel * in_ch * out_ch + (out_ch if bias else 0)


def dense_params(n_in, n_out, bias=True):
    return n_in * n_out + (n_out if bias else 0)


def epoch_seconds(flops_before, flops_total, acts, params, fk, fs, rate, dk, bk, bits=32):
    """Epoch delay written out from scratch, one cut at a time."""
    per_batch = flops_before * bk / fk + acts * bits * bk / rate + (flops_total - flops_before) * bk / fs
    return 2 * dk / bk * per_batch + 2 * params * bits / rate


def brute_force_cut(profile, fk, fs, rate, dk, bk=100):
    """Quadratic pairwise search: a cut wins if it beats or ties-and-is-shallower
    than every other cut."""
    m = profile.n_layers
    t = {
        n: epoch_seconds(int(profile.cum_flops[n]), int(profile.cum_flops[-1]), int(profile.act_size[n]),
                         int(profile.cum_params[n]), fk, fs, rate, dk, bk)
        for n in range(1, m)
    }
    winners = [n for n in t if all(t[n] < t[o] or (t[n] == t[o] and n <= o) for o in t)]
    assert len(winners) == 1
    return winners[0]


def lower_left_chain(points):
    """Vertices of the lower convex chain from the leftmost to the lowest point.

    ``points`` maps label -> (x, y) with exact coordinates. Collinear
    interior points are dropped. Andrew's monotone chain.
    """
    pts = sorted(points.items(), key=lambda kv: (kv[1][0], kv[1][1]))

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    hull = []
    for label, p in pts:
        while len(hull) >= 2 and cross(hull[-2][1], hull[-1][1], p) <= 0:
            hull.pop()
        hull.append((label, p))
    lowest = min(p[1] for _, p in hull)
    out = []
    for label, p in hull:
        out.append(label)
        if p[1] == lowest:
            break
    return out


def footprint_points(profile, layers, dk, bits=32):
    d = Fraction(dk)
    return {
        n: (int(profile.cum_flops[n]), bits * (int(profile.act_size[n]) + Fraction(int(profile.cum_params[n])) / d))
        for n in layers
    }


def folded_normal_mean(mu, sigma):
    if sigma == 0:
        return abs(mu)
    phi = 0.5 * (1 + math.erf((-mu / sigma) / math.sqrt(2)))
    return sigma * math.sqrt(2 / math.pi) * math.exp(-mu * mu / (2 * sigma * sigma)) + mu * (1 - 2 * phi)
