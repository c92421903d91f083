"""Central finite-difference checking of tape gradients.

The checker perturbs every parameter element by +/- eps, recomputes the
scalar objective without a tape, and compares the two-sided slope with
the analytic gradient from one backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, Tape
from .rng import stream


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class ParamCheck:
    name: str
    max_rel_err: float
    ok: bool


@dataclass
class GradCheckReport:
    tol: float
    eps: float
    checks: list[ParamCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def worst(self) -> float:
        return max((c.max_rel_err for c in self.checks), default=0.0)

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            status = "ok" if c.ok else "FAIL"
            out.append(f"{status:4s} {c.name:40s} max_rel_err={c.max_rel_err:.3e}")
        return out


def gradcheck(
    f: Callable[[], Tensor],
    params: dict[str, Tensor],
    eps: float = 1e-5,
    tol: float = 1e-6,
) -> GradCheckReport:
    """Check d f / d params against central finite differences.

    `f` must be a deterministic scalar function of the given parameter
    tensors (read through closure). Relative error per element is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    tape = Tape()
    tape.watch(*params.values())
    loss = f()
    if not np.isfinite(loss.data).all():
        raise NonFiniteError("objective is not finite")
    ad.backward(loss)
    analytic: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.isfinite(g).all():
            raise NonFiniteError(f"gradient of {name} is not finite")
        analytic[name] = np.array(g, copy=True)
        p.tape = None  # numeric passes run tape-free

    report = GradCheckReport(tol=tol, eps=eps)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        numeric = np.empty_like(flat)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            hi = float(f().data)
            flat[k] = orig - eps
            lo = float(f().data)
            flat[k] = orig
            numeric[k] = (hi - lo) / (2 * eps)
        if not np.isfinite(numeric).all():
            raise NonFiniteError(f"finite differences of {name} are not finite")
        a = analytic[name].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
        rel = np.abs(a - numeric) / denom
        worst = float(rel.max()) if rel.size else 0.0
        report.checks.append(ParamCheck(name, worst, worst < tol))
    return report


def _projection_loss(out: Tensor, rng: np.random.Generator) -> Tensor:
    """Random fixed projection to a scalar; richer than a plain mean."""
    w = Tensor(rng.normal(size=out.shape))
    return ad.reduce_sum(ad.mul(out, w))


def primitive_cases(seed: int = 0) -> dict[str, tuple[dict[str, Tensor], Callable[[], Tensor]]]:
    """One seeded check case per primitive op.

    Inputs are kept away from relu/max kinks so the two-sided slope is
    well defined at eps = 1e-5.
    """
    cases: dict[str, tuple[dict[str, Tensor], Callable[[], Tensor]]] = {}

    def rg(name):
        return stream(seed, f"gradcheck/{name}")

    r = rg("matmul")
    a = Tensor(r.normal(size=(3, 4)))
    b = Tensor(r.normal(size=(4, 2)))
    cases["matmul"] = ({"a": a, "b": b}, lambda: _projection_loss(ad.matmul(a, b), rg("matmul/proj")))

    r = rg("matmul_batched")
    a2 = Tensor(r.normal(size=(2, 3, 4)))
    b2 = Tensor(r.normal(size=(4, 5)))
    cases["matmul_batched"] = (
        {"a": a2, "b": b2},
        lambda: _projection_loss(ad.matmul(a2, b2), rg("matmul_batched/proj")),
    )

    r = rg("matmul_vec")
    a3 = Tensor(r.normal(size=(3, 3, 4)))
    v = Tensor(r.normal(size=(4,)))
    cases["matmul_vec"] = (
        {"a": a3, "v": v},
        lambda: _projection_loss(ad.matmul(a3, v), rg("matmul_vec/proj")),
    )

    r = rg("add")
    xa = Tensor(r.normal(size=(2, 3, 5)))
    xb = Tensor(r.normal(size=(5,)))
    cases["add"] = ({"a": xa, "b": xb}, lambda: _projection_loss(ad.add(xa, xb), rg("add/proj")))

    r = rg("mul")
    ma = Tensor(r.normal(size=(2, 4)))
    mb = Tensor(r.normal(size=(2, 4)))
    cases["mul"] = ({"a": ma, "b": mb}, lambda: _projection_loss(ad.mul(ma, mb), rg("mul/proj")))

    r = rg("scale")
    sx = Tensor(r.normal(size=(3, 3)))
    cases["scale"] = ({"x": sx}, lambda: _projection_loss(ad.scale(sx, -2.5), rg("scale/proj")))

    r = rg("relu")
    base = r.normal(size=(4, 4))
    rx = Tensor(base + np.sign(base) * 0.3)  # keep clear of the kink
    cases["relu"] = ({"x": rx}, lambda: _projection_loss(ad.relu(rx), rg("relu/proj")))

    r = rg("transpose")
    tx = Tensor(r.normal(size=(2, 3, 4)))
    cases["transpose"] = (
        {"x": tx},
        lambda: _projection_loss(ad.transpose(tx, (2, 0, 1)), rg("transpose/proj")),
    )

    r = rg("reshape")
    qx = Tensor(r.normal(size=(3, 4)))
    cases["reshape"] = (
        {"x": qx},
        lambda: _projection_loss(ad.reshape(qx, (2, 6)), rg("reshape/proj")),
    )

    r = rg("concat")
    c1 = Tensor(r.normal(size=(2, 3)))
    c2 = Tensor(r.normal(size=(2, 2)))
    cases["concat"] = (
        {"a": c1, "b": c2},
        lambda: _projection_loss(ad.concat([c1, c2], axis=1), rg("concat/proj")),
    )

    # softmax and log_softmax are checked through a downstream scalar
    r = rg("softmax")
    smx = Tensor(r.normal(size=(3, 6)))
    cases["softmax"] = (
        {"x": smx},
        lambda: _projection_loss(ad.softmax(smx, axis=-1), rg("softmax/proj")),
    )

    r = rg("log_softmax")
    lsx = Tensor(r.normal(size=(3, 6)))
    cases["log_softmax"] = (
        {"x": lsx},
        lambda: _projection_loss(ad.log_softmax(lsx, axis=-1), rg("log_softmax/proj")),
    )

    r = rg("layer_norm")
    lx = Tensor(r.normal(size=(2, 3, 6)))
    lg = Tensor(r.normal(size=(6,)) + 1.5)
    lb = Tensor(r.normal(size=(6,)))
    cases["layer_norm"] = (
        {"x": lx, "gain": lg, "bias": lb},
        lambda: _projection_loss(ad.layer_norm(lx, lg, lb), rg("layer_norm/proj")),
    )

    r = rg("embedding")
    table = Tensor(r.normal(size=(7, 4)))
    ids = r.integers(0, 7, size=(2, 5))
    cases["embedding"] = (
        {"table": table},
        lambda: _projection_loss(ad.embedding(table, ids), rg("embedding/proj")),
    )

    r = rg("masked_fill")
    fx = Tensor(r.normal(size=(4, 4)))
    fmask = r.random(size=(4, 4)) < 0.4
    cases["masked_fill"] = (
        {"x": fx},
        lambda: _projection_loss(ad.masked_fill(fx, fmask, -3.0), rg("masked_fill/proj")),
    )

    r = rg("mean")
    mx = Tensor(r.normal(size=(3, 4, 2)))
    cases["mean"] = ({"x": mx}, lambda: _projection_loss(ad.mean(mx, axis=1), rg("mean/proj")))

    r = rg("reduce_sum")
    ux = Tensor(r.normal(size=(3, 4)))
    cases["reduce_sum"] = (
        {"x": ux},
        lambda: _projection_loss(ad.reduce_sum(ux, axis=0), rg("reduce_sum/proj")),
    )

    r = rg("cross_entropy")
    ce_logits = Tensor(r.normal(size=(6, 5)))
    ce_targets = np.array([0, 3, 2, 4, 1, 2])
    ce_targets[4] = -1  # ignored row
    cases["cross_entropy"] = (
        {"logits": ce_logits},
        lambda: ad.cross_entropy(ce_logits, ce_targets, ignore_index=-1),
    )

    return cases


def check_primitives(seed: int = 0, eps: float = 1e-5, tol: float = 1e-6) -> GradCheckReport:
    """Run every primitive op case; aggregate into one report."""
    report = GradCheckReport(tol=tol, eps=eps)
    for op_name, (params, f) in primitive_cases(seed).items():
        sub = gradcheck(f, params, eps=eps, tol=tol)
        for c in sub.checks:
            report.checks.append(ParamCheck(f"{op_name}/{c.name}", c.max_rel_err, c.ok))
    return report
