"""Linear maps whose weight is a shared matrix modulated per language.

The effective weight for language l is

    W_eff(l) = W_S (.) sum_i r_m[l][i] s_m[l][i]^T  +  sum_i r_a[l][i] s_a[l][i]^T

with (.) elementwise.  ``forward_explicit`` materializes W_eff on the tape
(training path); ``forward_fast`` never forms it, gating the input and output
of the shared matmul instead (inference path).  The two agree to 1e-9.

With ``factored=False`` the layer is a plain shared linear with the exact
same W_S/b_S initialization, which is what the equal-capacity baseline
comparisons rely on.
"""

from array import array
from math import sqrt

from .diffcore.rng import Rng
from .diffcore.tensor import (
    Param,
    Tensor,
    add,
    add_rowvec,
    is_grad_enabled,
    matmul,
    mul,
    no_grad,
    outer,
    reshape,
    row_scale,
)


def _param(name, shape):
    n = 1
    for d in shape:
        n *= d
    return Param(name, shape, array("d", bytes(8 * n)))


class FactorizedLinear:
    """D_in -> D_out map with per-language rank-k multiplicative and additive factors."""

    def __init__(self, path, d_in, d_out, langs, k, bias=True, factored=True):
        if d_in < 1 or d_out < 1:
            raise ValueError(f"{path}: dims must be positive, got {d_in}x{d_out}")
        if langs < 1 or k < 1:
            raise ValueError(f"{path}: langs and k must be >= 1, got L={langs}, k={k}")
        self.path = path
        self.d_in = d_in
        self.d_out = d_out
        self.langs = langs
        self.k = k
        self.factored = factored
        self.W_S = _param(f"{path}.W_S", (d_in, d_out))
        self.b_S = _param(f"{path}.b_S", (d_out,)) if bias else None
        if factored:
            self.r_m = [[_param(f"{path}.r_m.{l}.{i}", (d_in,)) for i in range(k)]
                        for l in range(langs)]
            self.s_m = [[_param(f"{path}.s_m.{l}.{i}", (d_out,)) for i in range(k)]
                        for l in range(langs)]
            self.r_a = [[_param(f"{path}.r_a.{l}.{i}", (d_in,)) for i in range(k)]
                        for l in range(langs)]
            self.s_a = [[_param(f"{path}.s_a.{l}.{i}", (d_out,)) for i in range(k)]
                        for l in range(langs)]
        else:
            self.r_m = self.s_m = self.r_a = self.s_a = None

    def init_identity(self, rng):
        """Shared Xavier init; factors start as an exact identity modulation.

        r_m all-ones everywhere; s_m all-ones on rank pair 0 and zero on the
        rest, so the multiplicative mask sums to the all-ones matrix.  r_a is
        small random with s_a zero: the additive term starts at zero but both
        vectors still receive gradient (a zero/zero init would freeze the
        pair, since each vector's gradient is proportional to the other).
        """
        if isinstance(rng, int):
            rng = Rng(rng)
        a = sqrt(6.0 / (self.d_in + self.d_out))
        wrng = rng.split("W_S")
        w = self.W_S.data
        for j in range(len(w)):
            w[j] = wrng.uniform(-a, a)
        self.W_S._fin = False
        if not self.factored:
            return
        for l in range(self.langs):
            for i in range(self.k):
                rm = self.r_m[l][i].data
                for j in range(len(rm)):
                    rm[j] = 1.0
                if i == 0:
                    sm = self.s_m[l][0].data
                    for j in range(len(sm)):
                        sm[j] = 1.0
                arng = rng.split(f"r_a.{l}.{i}")
                ra = self.r_a[l][i].data
                for j in range(len(ra)):
                    ra[j] = arng.normal(0.0, 0.02)
                self.r_a[l][i]._fin = False

    def _check_lang(self, l):
        if not (0 <= l < self.langs):
            raise ValueError(
                f"{self.path}: language {l} out of range for L={self.langs}"
            )

    def _check_input(self, x):
        if len(x.shape) != 2 or x.shape[1] != self.d_in:
            raise ValueError(
                f"{self.path}: input shape {x.shape} does not match D_in={self.d_in}"
            )

    def compose_weight(self, l):
        """Materialize W_eff(l) as a tape-connected [D_in, D_out] tensor."""
        self._check_lang(l)
        if not self.factored:
            return self.W_S
        mask = outer(self.r_m[l][0], self.s_m[l][0])
        for i in range(1, self.k):
            mask = add(mask, outer(self.r_m[l][i], self.s_m[l][i]))
        w = mul(self.W_S, mask)
        for i in range(self.k):
            w = add(w, outer(self.r_a[l][i], self.s_a[l][i]))
        return w

    def forward_explicit(self, l, x):
        """x @ W_eff(l) + b_S via the composed weight; full gradient support."""
        self._check_input(x)
        y = matmul(x, self.compose_weight(l))
        if self.b_S is not None:
            y = add_rowvec(y, self.b_S)
        return y

    def forward_fast(self, l, x):
        """Gated path: never forms W_eff, runs k shared matmuls on gated inputs."""
        self._check_lang(l)
        self._check_input(x)
        if not self.factored:
            y = matmul(x, self.W_S)
            if self.b_S is not None:
                y = add_rowvec(y, self.b_S)
            return y
        y = None
        for i in range(self.k):
            term = row_scale(matmul(row_scale(x, self.r_m[l][i]), self.W_S),
                             self.s_m[l][i])
            y = term if y is None else add(y, term)
        for i in range(self.k):
            u = matmul(x, reshape(self.r_a[l][i], (self.d_in, 1)))
            y = add(y, matmul(u, reshape(self.s_a[l][i], (1, self.d_out))))
        if self.b_S is not None:
            y = add_rowvec(y, self.b_S)
        return y

    def forward(self, l, x):
        """Explicit path under gradient tracking, gated path for inference."""
        if not self.factored:
            self._check_lang(l)
            self._check_input(x)
            y = matmul(x, self.W_S)
            if self.b_S is not None:
                y = add_rowvec(y, self.b_S)
            return y
        if is_grad_enabled():
            return self.forward_explicit(l, x)
        return self.forward_fast(l, x)

    def params(self):
        out = [self.W_S]
        if self.b_S is not None:
            out.append(self.b_S)
        if self.factored:
            for l in range(self.langs):
                for i in range(self.k):
                    out.extend((self.r_m[l][i], self.s_m[l][i],
                                self.r_a[l][i], self.s_a[l][i]))
        return out

    def lang_params(self, l):
        """The factor vectors owned by language l (empty when not factored)."""
        self._check_lang(l)
        if not self.factored:
            return []
        out = []
        for i in range(self.k):
            out.extend((self.r_m[l][i], self.s_m[l][i],
                        self.r_a[l][i], self.s_a[l][i]))
        return out

    def shared_params(self):
        out = [self.W_S]
        if self.b_S is not None:
            out.append(self.b_S)
        return out

    def param_overhead(self):
        """Parameter accounting for one layer.

        per_language_added counts both factor banks (multiplicative and
        additive): 2k(D_in + D_out).  single_matrix_* report the one-bank
        figure k(D_in + D_out), the form the headline percentage is usually
        quoted in.
        """
        shared = self.d_in * self.d_out + (self.d_out if self.b_S is not None else 0)
        added = 2 * self.k * (self.d_in + self.d_out) if self.factored else 0
        single = self.k * (self.d_in + self.d_out)
        return {
            "d_in": self.d_in,
            "d_out": self.d_out,
            "per_language_added": added,
            "shared": shared,
            "ratio": added / shared,
            "single_matrix_added": single,
            "single_matrix_ratio": single / (self.d_in * self.d_out),
        }


def equivalence_sweep(seed=0, layers=208, dims=None, k=None, langs=None,
                      batch=2):
    """Max |forward_fast - forward_explicit| over randomized layers.

    Every parameter (shared weight and all factor vectors) is drawn from a
    unit normal so the two computation paths are compared far away from the
    identity initialization.  dims/k/langs pin those draws when given;
    otherwise each layer samples D_in, D_out in [4, 64], k in [1, 4], and a
    language count in [1, 8].  Returns (max_deviation, layers_tested).
    """
    if layers < 1:
        raise ValueError(f"equivalence_sweep: layers must be >= 1, got {layers}")
    rng = Rng(seed).split("equiv-sweep")
    worst = 0.0
    for idx in range(layers):
        crng = rng.split(idx)
        d_in, d_out = dims if dims else (4 + crng.randint(61), 4 + crng.randint(61))
        kk = k if k else 1 + crng.randint(4)
        ll = langs if langs else 1 + crng.randint(8)
        layer = FactorizedLinear(f"sweep.{idx}", d_in, d_out, ll, kk)
        for p in layer.params():
            crng.split(p.name).fill_normal(p.data)
            p._fin = False
        xbuf = array("d", bytes(8 * batch * d_in))
        crng.split("x").fill_normal(xbuf)
        x = Tensor((batch, d_in), xbuf)
        for l in range(ll):
            with no_grad():
                fast = layer.forward_fast(l, x)
            explicit = layer.forward_explicit(l, x)
            dev = max(abs(a - b) for a, b in zip(fast.data, explicit.data))
            if dev > worst:
                worst = dev
    return worst, layers
