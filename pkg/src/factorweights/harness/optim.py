"""Adam with bias correction, inverse-sqrt warmup schedule, gradient clipping."""

import logging
import math
from array import array

from .. import kernels as K

log = logging.getLogger("factorweights")


def noam_lr(step, base_lr, warmup, d_model):
    """base_lr * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5).

    Rises linearly for ``warmup`` updates, then decays as 1/sqrt(step).  The
    two branches meet exactly at step == warmup.  Step counting starts at 1;
    the schedule is undefined at 0.
    """
    if step < 1:
        raise ValueError(f"noam_lr: step must be >= 1, got {step}")
    if warmup < 1:
        raise ValueError(f"noam_lr: warmup must be >= 1, got {warmup}")
    return base_lr * d_model ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)


def clip_global_norm(params, max_norm):
    """Scale all grads by max_norm/norm when the joint L2 norm exceeds max_norm.

    Returns the pre-clip norm.  The norm is accumulated in a fixed order
    (parameter list order) so it is reproducible.
    """
    total = 0.0
    for p in params:
        total += K.sumsq(p.grad, len(p.grad))
    norm = math.sqrt(total)
    if not math.isfinite(norm):
        raise RuntimeError(f"clip_global_norm: non-finite gradient norm {norm}")
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            K.scale_inplace(p.grad, scale, len(p.grad))
        log.debug("clipped gradients: norm %.4f -> %.1f", norm, max_norm)
    return norm


class Adam:
    """Adam over named parameters; moment buffers are keyed by parameter name."""

    def __init__(self, params, beta1=0.9, beta2=0.98, eps=1e-9):
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("adam: duplicate parameter names")
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {p.name: array("d", bytes(8 * p.size)) for p in self.params}
        self.v = {p.name: array("d", bytes(8 * p.size)) for p in self.params}

    def step(self, lr):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p in self.params:
            K.adam_step(p.data, p.grad, self.m[p.name], self.v[p.name],
                        p.size, lr, self.beta1, self.beta2, self.eps,
                        bc1, bc2)
            p._fin = False  # data mutated in place, cached finiteness is stale

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    # -- checkpoint plumbing ---------------------------------------------------

    def state_arrays(self):
        """Moment buffers plus the step counter, as named flat arrays."""
        out = {}
        for p in self.params:
            out[f"adam.m.{p.name}"] = (p.shape, self.m[p.name])
            out[f"adam.v.{p.name}"] = (p.shape, self.v[p.name])
        out["adam.t"] = ((), array("d", [float(self.t)]))
        return out

    def load_state_arrays(self, arrays):
        expected = set(self.state_arrays())
        got = set(arrays)
        if expected != got:
            missing = sorted(expected - got)
            extra = sorted(got - expected)
            raise ValueError(
                f"adam: optimizer state mismatch (missing {missing}, unexpected {extra})")
        for p in self.params:
            for kind, dst in (("m", self.m[p.name]), ("v", self.v[p.name])):
                shape, buf = arrays[f"adam.{kind}.{p.name}"]
                if shape != p.shape or len(buf) != len(dst):
                    raise ValueError(
                        f"adam: state adam.{kind}.{p.name} has shape {shape}, "
                        f"parameter has {p.shape}")
                dst[:] = buf
        _shape, tbuf = arrays["adam.t"]
        self.t = int(tbuf[0])
