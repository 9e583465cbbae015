#!/usr/bin/env python3
"""Offline builder for the bundled base-2 generating-vector files.

Fast component-by-component search for interlaced polynomial lattice rules
with product weights.  The base lattice has ``d*s`` coordinates; base
coordinate ``(j, l)`` (interlaced coordinate ``j``, component ``l``) is chosen
to minimise

    sum_n P_n(j) * A_n(j, l) * omega_d(x_n),

where ``omega_d(x) = sum_{k>=1} 2**(-d*mu_1(k)) wal_k(x)``, ``A_n`` is the
product of ``1 + omega_d`` over the components of ``j`` already chosen and
``P_n`` is the product over finished coordinates of
``1 + gamma_j * (prod_l (1 + omega_d) - 1)``.  With a primitive modulus the
score for all candidates is one circular correlation (FFT).

Usage::

    python tools/build_genvecs.py            # writes src/elastqmc/data/genvec
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from elastqmc.qmc import QmcRule, _laurent_digits, write_genvec

OUT = Path(__file__).resolve().parents[1] / "src" / "elastqmc" / "data" / "genvec"


def _polymulmod(a: int, b: int, p: int, m: int) -> int:
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a >> m & 1:
            a ^= p
    return r


def _prime_factors(n: int) -> list[int]:
    out, f = [], 2
    while f * f <= n:
        if n % f == 0:
            out.append(f)
            while n % f == 0:
                n //= f
        f += 1
    if n > 1:
        out.append(n)
    return out


def _order_is_full(p: int, m: int) -> bool:
    n = 2**m - 1

    def xpow(e):
        r, base = 1, 2 % p if m > 1 else 1
        while e:
            if e & 1:
                r = _polymulmod(r, base, p, m)
            base = _polymulmod(base, base, p, m)
            e >>= 1
        return r

    if xpow(n) != 1:
        return False
    return all(xpow(n // r) != 1 for r in _prime_factors(n)) if n > 1 else True


def primitive_modulus(m: int) -> int:
    """Smallest primitive polynomial of degree m over GF(2), as a bit mask."""
    for low in range(1, 2**m, 2):
        p = (1 << m) | low
        if _order_is_full(p, m):
            return p
    raise RuntimeError(f"no primitive polynomial of degree {m}")


def _bits(x: int, m: int) -> tuple[int, ...]:
    return tuple((x >> i) & 1 for i in range(m))


def omega(first_one: np.ndarray, d: int) -> np.ndarray:
    t = first_one.astype(float)
    r = 2.0 ** (1 - d)
    # 0.5 * sum_{a=1}^{t-1} r^a - 0.5 * r^t
    geo = r * (1 - r ** (t - 1)) / (1 - r)
    return 0.5 * geo - 0.5 * r**t


def cbc(m: int, d: int, weights: np.ndarray) -> QmcRule:
    s = len(weights)
    p = primitive_modulus(m)
    n = 2**m
    order = n - 1
    modulus = _bits(p, m + 1)
    # element table e_k = x^k mod p
    elems = np.empty(order, dtype=np.int64)
    e = 1
    for k in range(order):
        elems[k] = e
        e = _polymulmod(e, 2 % p if m > 1 else 1, p, m)
    # omega of v_m(e_k / p): position of first nonzero fractional digit
    first = np.empty(order, dtype=np.int64)
    for k in range(order):
        u = _laurent_digits(_bits(int(elems[k]), m), modulus, 2, m)
        first[k] = int(np.flatnonzero(u)[0]) + 1
    f = omega(first, d)
    F = np.fft.rfft(f)

    P = np.ones(order)  # n != 0 only; n = 0 contributes a constant
    genvec = []
    for j in range(s):
        A = np.ones(order)
        for _ in range(d):
            w = P * A
            # score[c] = sum_a w[a] f[(a + c) % order]
            score = np.fft.irfft(np.conj(np.fft.rfft(w)) * F, n=order)
            c = int(np.argmin(np.round(score, 12)))
            genvec.append(_bits(int(elems[c]), m))
            A = A * (1.0 + np.roll(f, -c))
        P = P * (1.0 + weights[j] * (A - 1.0))
    return QmcRule(2, m, s, d, modulus, tuple(genvec), name=f"b2_m{m}_d{d}")


def decay_weights(s: int) -> np.ndarray:
    j = np.arange(1, s + 1)
    return np.minimum(1.0, 2.0 / j**2)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=OUT)
    ap.add_argument("--m-max", type=int, default=10)
    ap.add_argument("--s", type=int, default=256)
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    w = decay_weights(args.s)
    for d in (2, 3):
        for m in range(1, args.m_max + 1):
            rule = cbc(m, d, w)
            note = (f"interlaced polynomial lattice rule, b=2 m={m} d={d} s={args.s}\n"
                    f"fast CBC, product weights min(1, 2/j^2)")
            path = args.out / f"b2_m{m}_d{d}_decay.txt"
            write_genvec(rule, path, comment=note)
            print("wrote", path)


if __name__ == "__main__":
    main()
