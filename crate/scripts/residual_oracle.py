"""Symbolic oracle for the mixed-form residuals.

Writes, for manufactured stream functions with stress taken from the
constitutive law and an arbitrary smooth pressure, every output derivative the
residuals consume and the exact momentum residual (v . grad) v - div(sigma).
The stress and trace residuals of these fields vanish identically.

    python3 scripts/residual_oracle.py > crates/core/tests/data/residual_oracle.csv
"""

import itertools
import sys

import sympy as sp

RE = sp.Rational(50)
AXES = "xyz"


def curl(psi, X):
    if len(X) == 2:
        (p,) = psi
        return [sp.diff(p, X[1]), -sp.diff(p, X[0])]
    return [
        sp.diff(psi[2], X[1]) - sp.diff(psi[1], X[2]),
        sp.diff(psi[0], X[2]) - sp.diff(psi[2], X[0]),
        sp.diff(psi[1], X[0]) - sp.diff(psi[0], X[1]),
    ]


def case(psi, p, X):
    n = len(X)
    v = curl(psi, X)
    grad = [[sp.diff(v[i], X[j]) for j in range(n)] for i in range(n)]
    sigma = [[-p * int(i == j) + (grad[i][j] + grad[j][i]) / RE for j in range(n)] for i in range(n)]
    momentum = [
        sum(v[j] * grad[i][j] for j in range(n)) - sum(sp.diff(sigma[i][j], X[j]) for j in range(n))
        for i in range(n)
    ]
    cols = []
    for a, s in enumerate(psi):
        cols.append((f"psi{a}", s))
        cols += [(f"psi{a}_{AXES[j]}", sp.diff(s, X[j])) for j in range(n)]
        for j, k in itertools.combinations_with_replacement(range(n), 2):
            cols.append((f"psi{a}_{AXES[j]}{AXES[k]}", sp.diff(s, X[j], X[k])))
    cols.append(("p", p))
    cols += [(f"p_{AXES[j]}", sp.diff(p, X[j])) for j in range(n)]
    for i, j in itertools.combinations_with_replacement(range(n), 2):
        cols.append((f"s{i}{j}", sigma[i][j]))
        cols += [(f"s{i}{j}_{AXES[m]}", sp.diff(sigma[i][j], X[m])) for m in range(n)]
    cols += [(f"r{i}", sp.simplify(momentum[i])) for i in range(n)]
    return cols


def emit(name, cols, X, probes, out):
    out.write(f"# {name}\n")
    out.write(",".join(["case"] + [str(x) for x in X] + [c for c, _ in cols]) + "\n")
    for pt in probes:
        vals = [sp.N(e.subs(dict(zip(X, pt))), 30) for _, e in cols]
        row = [name] + [repr(float(c)) for c in pt] + [repr(float(v)) for v in vals]
        out.write(",".join(row) + "\n")


def main():
    out = sys.stdout
    out.write(f"# Re = {RE}\n")
    x, y, z = sp.symbols("x y z")
    probes2 = [(sp.Rational(3, 10), sp.Rational(7, 10)), (sp.Rational(-11, 10), sp.Rational(2, 5)),
               (sp.Rational(9, 4), sp.Rational(-13, 10)), (sp.Rational(1, 20), sp.Rational(1, 8))]
    emit("sin2d", case([sp.sin(x) * sp.sin(y)], sp.cos(x) * sp.cos(y), [x, y]), [x, y], probes2, out)
    probes3 = [(sp.Rational(3, 10), sp.Rational(7, 10), sp.Rational(-1, 5)),
               (sp.Rational(-9, 10), sp.Rational(2, 5), sp.Rational(6, 5)),
               (sp.Rational(1, 2), sp.Rational(-3, 2), sp.Rational(1, 3))]
    psi3 = [sp.sin(y) * sp.cos(z), x * z**2 / 2, sp.exp(x / 2) * sp.sin(y)]
    emit("mixed3d", case(psi3, x * y - sp.sin(z), [x, y, z]), [x, y, z], probes3, out)


if __name__ == "__main__":
    main()
