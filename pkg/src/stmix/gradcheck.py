"""Central finite-difference gradient checking against the tape."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .rng import Rng
from .tensor import NonFiniteError, Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    n_checked: int
    worst: str = ""
    failure: str | None = None
    per_tensor: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.failure is None and self.max_rel_error < self.tol


def grad_check(
    f: Callable[[], Tensor],
    inputs: Tensor | Sequence[Tensor],
    h: float = 1e-5,
    tol: float = 1e-6,
    max_coords: int | None = None,
    rng: Rng | None = None,
    names: Sequence[str] | None = None,
) -> GradCheckReport:
    """Compare tape gradients of scalar ``f()`` w.r.t. ``inputs`` with central differences.

    ``f`` is re-evaluated after in-place perturbation of each input entry, so
    it must close over the input tensors. The error for one input is
    ``max |g_tape - g_fd| / max(|g_tape|_inf, |g_fd|_inf)`` over the checked
    coordinates; the report holds the maximum over inputs. With ``max_coords``
    only that many randomly chosen coordinates per input are perturbed.
    """
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    names = list(names) if names is not None else [f"input{i}" for i in range(len(inputs))]
    rng = rng or Rng(0)
    for x in inputs:
        x.requires_grad = True
        x.grad = None
    try:
        out = f()
    except NonFiniteError as exc:
        return GradCheckReport(np.inf, tol, 0, failure=f"forward: {exc}")
    if out.data.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    out.backward()

    worst, worst_name, n_checked = 0.0, "", 0
    per_tensor = {}
    for name, x in zip(names, inputs):
        tape = np.zeros_like(x.data) if x.grad is None else x.grad
        flat = x.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.permutation(flat.size)[:max_coords])
        fd = np.empty(len(coords))
        for j, i in enumerate(coords):
            orig = flat[i]
            try:
                flat[i] = orig + h
                fp = float(f().data)
                flat[i] = orig - h
                fm = float(f().data)
            except NonFiniteError as exc:
                return GradCheckReport(np.inf, tol, n_checked, failure=f"{name}[{i}]: {exc}")
            finally:
                flat[i] = orig
            fd[j] = (fp - fm) / (2 * h)
        g = tape.reshape(-1)[coords]
        scale = max(np.abs(tape).max(initial=0.0), np.abs(fd).max(initial=0.0), 1e-300)
        err = float(np.abs(g - fd).max(initial=0.0) / scale)
        per_tensor[name] = err
        n_checked += len(coords)
        if err >= worst:
            worst, worst_name = err, name
    for x in inputs:
        x.grad = None
    return GradCheckReport(worst, tol, n_checked, worst_name, per_tensor=per_tensor)
