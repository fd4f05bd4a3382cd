"""Kernel backend selection.

The compiled extension is preferred; the pure-Python mirror is the fallback.
``FACTORWEIGHTS_BACKEND=py`` forces the fallback, ``=c`` demands the
extension (raising if it failed to build).  Both export the same functions
and produce bit-identical results.
"""

import os

_choice = os.environ.get("FACTORWEIGHTS_BACKEND", "").strip().lower()

if _choice not in ("", "c", "py"):
    raise RuntimeError(
        f"FACTORWEIGHTS_BACKEND must be 'c' or 'py', got {_choice!r}"
    )

if _choice == "py":
    from . import _pykern as _impl
    BACKEND = "py"
else:
    try:
        from . import _ckern as _impl
        BACKEND = "c"
    except ImportError:
        if _choice == "c":
            raise RuntimeError(
                "FACTORWEIGHTS_BACKEND=c but the compiled extension is not "
                "available; reinstall the package with a C toolchain present"
            ) from None
        from . import _pykern as _impl
        BACKEND = "py"

NEG_MASK = _impl.NEG_MASK

bmm_nn = _impl.bmm_nn
bmm_nn_acc = _impl.bmm_nn_acc
bmm_nt = _impl.bmm_nt
bmm_nt_acc = _impl.bmm_nt_acc
bmm_tn_acc = _impl.bmm_tn_acc

ew_add = _impl.ew_add
ew_sub = _impl.ew_sub
ew_mul = _impl.ew_mul
ew_scale = _impl.ew_scale
axpy = _impl.axpy
axpy_scaled = _impl.axpy_scaled
axpy_neg = _impl.axpy_neg
axpy_at = _impl.axpy_at
fma_acc = _impl.fma_acc
add_scalar_acc = _impl.add_scalar_acc
fill = _impl.fill
scale_inplace = _impl.scale_inplace

row_scale = _impl.row_scale
row_scale_acc = _impl.row_scale_acc
col_scale = _impl.col_scale
col_scale_acc = _impl.col_scale_acc
colreduce_mul_acc = _impl.colreduce_mul_acc
rowreduce_mul_acc = _impl.rowreduce_mul_acc
colsum_acc = _impl.colsum_acc
add_rowvec = _impl.add_rowvec
outer = _impl.outer

sigmoid_fwd = _impl.sigmoid_fwd
sigmoid_bwd_acc = _impl.sigmoid_bwd_acc
tanh_fwd = _impl.tanh_fwd
tanh_bwd_acc = _impl.tanh_bwd_acc
relu_fwd = _impl.relu_fwd
relu_bwd_acc = _impl.relu_bwd_acc

softmax_lastdim = _impl.softmax_lastdim
softmax_bwd_acc = _impl.softmax_bwd_acc
cross_entropy_fwd = _impl.cross_entropy_fwd
cross_entropy_bwd_acc = _impl.cross_entropy_bwd_acc

layer_norm_fwd = _impl.layer_norm_fwd
layer_norm_bwd_acc = _impl.layer_norm_bwd_acc

take_rows = _impl.take_rows
take_rows_bwd_acc = _impl.take_rows_bwd_acc
index_select = _impl.index_select
index_select_bwd_acc = _impl.index_select_bwd_acc

concat_cols = _impl.concat_cols
slice_cols = _impl.slice_cols
slice_cols_acc = _impl.slice_cols_acc

causal_mask = _impl.causal_mask
causal_mask_bwd_acc = _impl.causal_mask_bwd_acc

sum_all = _impl.sum_all
sumsq = _impl.sumsq
all_finite = _impl.all_finite

adam_step = _impl.adam_step
