"""Tensor engine: flat float64 storage, reverse-mode autodiff, seeded RNG."""

from .tensor import (
    BACKEND,
    Param,
    Tensor,
    add,
    add_rowvec,
    bmm_nn,
    bmm_nt,
    causal_mask,
    concat_cols,
    concat_rows,
    cross_entropy,
    col_scale,
    full,
    index_select,
    is_grad_enabled,
    layer_norm,
    matmul,
    mean_all,
    mul,
    no_grad,
    outer,
    relu,
    reshape,
    row_scale,
    scalar,
    scale,
    sigmoid,
    slice_cols,
    slice_rows,
    softmax,
    sub,
    sum_all,
    take_rows,
    tanh,
    tensor,
    zero_grads,
    zeros,
)
from .rng import Rng
from .gradcheck import GradCheckReport, finite_diff_check
