"""Run configuration: flat ``key = value`` files with a fixed schema.

Unknown keys are rejected by name so typos fail loudly instead of silently
training with a default.  ``render_config`` emits a canonical form (sorted
keys, repr floats) whose parse is the identity, which is what makes the
config echo inside checkpoints byte-reproducible.
"""

# (type, default, validator).  Defaults marked None are derived in resolve_config.
_SPEC = {
    # task
    "langs":          ("int",       4,    lambda v: v >= 1),
    "vocab":          ("int",       12,   lambda v: v >= 2),
    "seq_min":        ("int",       3,    lambda v: v >= 1),
    "seq_max":        ("int",       8,    lambda v: v >= 1),
    "noise":          ("float",     0.05, lambda v: v >= 0),
    "gains":          ("floatlist", None, None),
    "reverse":        ("intlist",   None, lambda v: all(x in (0, 1) for x in v)),
    "train_per_lang": ("int",       256,  lambda v: v >= 1),
    "dev_per_lang":   ("int",       32,   lambda v: v >= 1),
    "test_per_lang":  ("int",       32,   lambda v: v >= 1),
    "seed":           ("int",       0,    lambda v: v >= 0),
    # model
    "arch":           ("str",       "lstm", lambda v: v in ("lstm", "attention")),
    "d_model":        ("int",       64,   lambda v: v >= 1),
    "layers":         ("int",       2,    lambda v: v >= 1),
    "heads":          ("int",       4,    lambda v: v >= 1),
    "d_ff":           ("int",       None, lambda v: v >= 1),
    "d_feat":         ("int",       None, lambda v: v >= 1),
    "k":              ("int",       1,    lambda v: v >= 1),
    "factored":       ("int",       1,    lambda v: v in (0, 1)),
    "positional":     ("int",       1,    lambda v: v in (0, 1)),
    # training
    "base_lr":        ("float",     1.5,  lambda v: v > 0),
    "warmup":         ("int",       400,  lambda v: v >= 1),
    "max_frames":     ("int",       512,  lambda v: v >= 1),
    "total_updates":  ("int",       3000, lambda v: v >= 0),
    "accum_batches":  ("int",       1,    lambda v: v >= 1),
    "eval_interval":  ("int",       100,  lambda v: v >= 1),
    "clip_norm":      ("float",     5.0,  lambda v: v >= 0),
    "early_stop_acc": ("float",     0.0,  lambda v: 0.0 <= v <= 1.0),
    "early_stop_patience": ("int",  0,    lambda v: v >= 0),
}


def config_keys():
    return sorted(_SPEC)


def default_config():
    return resolve_config({k: v for k, (_t, v, _f) in _SPEC.items()})


def parse_config_text(text):
    """Parse and resolve a config given as text."""
    return resolve_config(parse_config_items(text))


def parse_config_items(text):
    """Typed key/value pairs over defaults, derived fields left unresolved.

    Lets callers layer overrides (CLI flags) on top before resolve_config.
    """
    cfg = {k: v for k, (_t, v, _f) in _SPEC.items()}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SPEC:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        seen.add(key)
        cfg[key] = _convert(key, value, lineno)
    return cfg


def load_config(path):
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    return parse_config_text(text)


def resolve_config(cfg):
    """Fill derived defaults and check cross-field consistency."""
    out = dict(cfg)
    if out.get("d_ff") is None:
        out["d_ff"] = 2 * out["d_model"]
    if out.get("d_feat") is None:
        out["d_feat"] = out["vocab"]
    if not out.get("gains"):
        out["gains"] = [1.0] * out["langs"]
    if not out.get("reverse"):
        out["reverse"] = [0] * out["langs"]
    for key, value in out.items():
        _t, _d, check = _SPEC[key]
        if check is not None and not check(value):
            raise ValueError(f"config: bad value for {key!r}: {value!r}")
    if out["seq_max"] < out["seq_min"]:
        raise ValueError(
            f"config: seq_max={out['seq_max']} is below seq_min={out['seq_min']}")
    if len(out["gains"]) != out["langs"]:
        raise ValueError(
            f"config: gains has {len(out['gains'])} entries for langs={out['langs']}")
    if len(out["reverse"]) != out["langs"]:
        raise ValueError(
            f"config: reverse has {len(out['reverse'])} entries for langs={out['langs']}")
    if out["seq_max"] > out["max_frames"]:
        raise ValueError(
            f"config: seq_max={out['seq_max']} exceeds max_frames={out['max_frames']}")
    return out


def render_config(cfg):
    """Canonical text form; parse_config_text(render_config(c)) == c."""
    lines = []
    for key in sorted(cfg):
        if key not in _SPEC:
            raise ValueError(f"config: unknown key {key!r}")
        lines.append(f"{key} = {_format(cfg[key])}")
    return "\n".join(lines) + "\n"


def _convert(key, value, lineno):
    kind = _SPEC[key][0]
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "str":
            return value
        parts = [p.strip() for p in value.split(",") if p.strip()]
        if kind == "intlist":
            return [int(p) for p in parts]
        if kind == "floatlist":
            return [float(p) for p in parts]
    except ValueError:
        raise ValueError(
            f"config line {lineno}: bad {kind} value for {key!r}: {value!r}") from None
    raise AssertionError(kind)


def _format(value):
    if isinstance(value, list):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)
