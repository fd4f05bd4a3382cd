"""Finite-difference gradient verification."""

from array import array

from .tensor import no_grad, zero_grads


class GradCheckReport:
    """Per-parameter worst relative error between tape and central differences."""

    def __init__(self, per_param, tol):
        self.per_param = dict(per_param)
        self.tol = tol
        self.max_rel_err = max(per_param.values()) if per_param else 0.0
        self.ok = self.max_rel_err < tol

    def __str__(self):
        lines = [f"gradcheck: max rel err {self.max_rel_err:.3e} (tol {self.tol:.1e})"]
        for name, err in sorted(self.per_param.items(), key=lambda kv: -kv[1]):
            lines.append(f"  {err:.3e}  {name}")
        return "\n".join(lines)


def finite_diff_check(f, params, h=1e-6, tol=1e-5):
    """Compare tape gradients of scalar f(params) against central differences.

    Error per entry is |g_tape - g_fd| / max(1, |g_tape| + |g_fd|): relative
    for gradients above unit scale, absolute below it.  A hard floor matters
    because (f(x+h) - f(x-h)) / 2h carries cancellation noise of roughly
    eps * |f| / h, which swamps any purely relative comparison on entries
    whose true gradient is tiny but not structurally zero.  The report keeps
    the worst entry per parameter.  f must be deterministic; two baseline
    evaluations that disagree are rejected outright.
    """
    if h <= 0:
        raise ValueError(f"finite_diff_check: h must be positive, got {h}")
    params = list(params)

    with no_grad():
        base1 = f(params).item()
        base2 = f(params).item()
    if base1 != base2:
        raise ValueError(
            "finite_diff_check: f is not deterministic "
            f"(baseline evals {base1!r} and {base2!r} differ)"
        )

    zero_grads(params)
    loss = f(params)
    loss.backward()
    tape = {p.name: array("d", p.grad) for p in params}
    zero_grads(params)

    per_param = {}
    with no_grad():
        for p in params:
            worst = 0.0
            for i in range(len(p.data)):
                orig = p.data[i]
                p.data[i] = orig + h
                p._fin = False
                fp = f(params).item()
                p.data[i] = orig - h
                p._fin = False
                fm = f(params).item()
                p.data[i] = orig
                p._fin = False
                g_fd = (fp - fm) / (2.0 * h)
                g_tape = tape[p.name][i]
                rel = abs(g_tape - g_fd) / max(1.0, abs(g_tape) + abs(g_fd))
                if rel > worst:
                    worst = rel
            per_param[p.name] = worst
    return GradCheckReport(per_param, tol)
