#!/usr/bin/env python3
"""Compare the Numba and NumPy statevector/Pauli kernels.

Usage: python benchmarks/bench_kernels.py [--qubits 10 14 18] [--repeat 20]

Both implementations are checked against each other before timing. The
process-wide choice is made by QOPF_DISABLE_NUMBA; this script bypasses it and
calls ``numba_impl`` and ``numpy_impl`` directly.
"""

import argparse
import time

import numpy as np

from qopf import _kernels


def _time(fn, repeat):
    fn()  # warm-up, triggers JIT compilation
    start = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - start) / repeat


def _cases(n, rng):
    dim = 1 << n
    amps = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    amps /= np.linalg.norm(amps)
    n_sys = max(1, n - 3)
    terms = 1 << (n - n_sys)
    xm = rng.integers(0, 1 << n_sys, size=terms).astype(np.int64)
    zm = rng.integers(0, 1 << n_sys, size=terms).astype(np.int64)
    ph = np.ones(terms, dtype=np.complex128)

    def inplace(kernel, *args):
        out = amps.copy()
        kernel(out, *args)
        return out

    return {
        "ry": lambda impl: inplace(impl.ry, n // 2, 0.3),
        "cz": lambda impl: inplace(impl.cz, 0, n - 1),
        "pauli_apply": lambda impl: impl.pauli_apply(amps, 0b1011 % dim, 0b0110 % dim, 1.0 + 0j, 0, 0),
        "lcu_select": lambda impl: impl.lcu_select(amps, n_sys, xm, zm, ph),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--qubits", type=int, nargs="+", default=[10, 14, 18])
    parser.add_argument("--pauli-qubits", type=int, nargs="+", default=[4, 6, 8])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()

    if _kernels.numba_impl is None:
        print("numba is not importable; nothing to compare")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20}{'qubits':>7}{'numpy [ms]':>13}{'numba [ms]':>13}{'speedup':>9}")
    for n in args.qubits:
        for name, call in _cases(n, rng).items():
            a = call(_kernels.numpy_impl)
            b = call(_kernels.numba_impl)
            assert np.allclose(a, b, atol=1e-12), f"{name} mismatch at n={n}"
            t_np = _time(lambda: call(_kernels.numpy_impl), args.repeat)
            t_nb = _time(lambda: call(_kernels.numba_impl), args.repeat)
            print(f"{name:<20}{n:>7}{1e3 * t_np:>13.3f}{1e3 * t_nb:>13.3f}{t_np / t_nb:>9.2f}")
    for n in args.pauli_qubits:
        dim = 1 << n
        A = rng.normal(size=(dim, dim))
        H = np.ascontiguousarray(A + A.T, dtype=np.complex128)
        a = _kernels.numpy_impl.pauli_coefficients(H)
        b = _kernels.numba_impl.pauli_coefficients(H)
        assert np.allclose(a, b, atol=1e-10), f"pauli_coefficients mismatch at n={n}"
        t_np = _time(lambda: _kernels.numpy_impl.pauli_coefficients(H), max(1, args.repeat // 4))
        t_nb = _time(lambda: _kernels.numba_impl.pauli_coefficients(H), max(1, args.repeat // 4))
        print(f"{'pauli_coefficients':<20}{n:>7}{1e3 * t_np:>13.3f}{1e3 * t_nb:>13.3f}{t_np / t_nb:>9.2f}")


if __name__ == "__main__":
    main()
