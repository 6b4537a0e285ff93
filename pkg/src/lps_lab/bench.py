"""Target functions, datasets, non-collapse campaigns and born-dead depth sweeps."""

import io
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .deadness import estimate_dead_prob
from .errors import ValidationError
from .initializers import InitScheme, Selection, init_params
from .mlp import NetSpec, TrainHyper, train_batch
from .stats import proportion_ci95


class Target(str, Enum):
    F1 = "f1"
    F2 = "f2"
    F3 = "f3"
    F4 = "f4"


@dataclass(frozen=True)
class TargetFunction:
    id: Target
    input_dim: int
    output_dim: int
    sample_count: int
    collapse_threshold: float
    hidden_layers: int
    hidden_width: int

    @property
    def widths(self) -> tuple:
        return (self.input_dim,) + (self.hidden_width,) * self.hidden_layers + (self.output_dim,)


TARGETS = {
    Target.F1: TargetFunction(Target.F1, 1, 1, 21, 0.09, 10, 2),
    Target.F2: TargetFunction(Target.F2, 1, 1, 21, 0.2, 10, 2),
    Target.F3: TargetFunction(Target.F3, 1, 1, 100, 0.2, 10, 2),
    Target.F4: TargetFunction(Target.F4, 2, 2, 441, 0.2, 20, 4),
}


def get_target(name) -> TargetFunction:
    try:
        return TARGETS[Target(str(name).lower())]
    except ValueError:
        raise ValidationError(f"unknown target {name!r}; expected one of f1..f4") from None


def eval_target(t: TargetFunction, x) -> np.ndarray:
    """f1 = |x|, f2 = x sin 5x, f3 = 1{x>0} + 0.2 sin 5x, f4 = (|x1+x2|, |x1-x2|).

    Accepts a single point or an (N, input_dim) batch.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1 and (t.input_dim == 1 and x.ndim == 0 or t.input_dim > 1 and x.ndim == 1)
    pts = x.reshape(-1, t.input_dim) if x.ndim <= 1 else x
    if pts.shape[1] != t.input_dim:
        raise ValidationError(f"{t.id.value} takes {t.input_dim}-dimensional inputs")
    u = pts[:, 0]
    if t.id is Target.F1:
        y = np.abs(u)[:, None]
    elif t.id is Target.F2:
        y = (u * np.sin(5 * u))[:, None]
    elif t.id is Target.F3:
        y = ((u > 0).astype(float) + 0.2 * np.sin(5 * u))[:, None]
    else:
        v = pts[:, 1]
        y = np.stack([np.abs(u + v), np.abs(u - v)], axis=1)
    if single:
        return y[0]
    return y


def make_dataset(t: TargetFunction):
    """Uniform grid with endpoints (linspace) on [-1, 1] or a 21 x 21 grid on
    [-1, 1]^2; returns ``(inputs (N, d), targets (N, k))``."""
    if t.input_dim == 1:
        x = np.linspace(-1.0, 1.0, t.sample_count)[:, None]
    else:
        side = int(round(np.sqrt(t.sample_count)))
        axis = np.linspace(-1.0, 1.0, side)
        g1, g2 = np.meshgrid(axis, axis, indexing="ij")
        x = np.stack([g1.ravel(), g2.ravel()], axis=1)
    return x, eval_target(t, x)


# -- configuration ---------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    target: TargetFunction
    spec: NetSpec
    scheme: InitScheme
    runs: int = 100
    base_seed: int = 0
    hyper: TrainHyper = TrainHyper()

    def __post_init__(self):
        if self.runs < 1:
            raise ValidationError("runs must be >= 1")
        if self.spec.widths[0] != self.target.input_dim or self.spec.widths[-1] != self.target.output_dim:
            raise ValidationError(
                f"widths {self.spec.widths} do not match {self.target.id.value} "
                f"({self.target.input_dim} in, {self.target.output_dim} out)"
            )


# Campaigns default to bit-decoded layer selection (see README).
EXPERIMENT_SELECTION = Selection.BITS

_KEYS = {
    "target": str,
    "scheme": str,
    "reinit": int,
    "selection": str,
    "bias": str,
    "widths": str,
    "runs": int,
    "seed": int,
    "lr": float,
    "steps": int,
    "collapse_threshold": float,
}


def make_config(target="f1", scheme="he", reinit=0, selection=None, bias="sampled", widths=None,
                runs=100, seed=0, lr=1e-3, steps=4000, collapse_threshold=None) -> RunConfig:
    """Build a RunConfig, filling per-target defaults (architecture, collapse
    threshold) and the experiment defaults (Adam, lr 1e-3, 4000 steps).
    ``widths`` may override the hidden layers but must keep the target's
    input and output dimensions."""
    t = get_target(target)
    if widths is None:
        widths = t.widths
    elif isinstance(widths, str):
        try:
            widths = tuple(int(w) for w in widths.split(","))
        except ValueError:
            raise ValidationError(f"widths must be comma-separated integers, got {widths!r}") from None
    init = InitScheme(scheme, reinit, selection or EXPERIMENT_SELECTION, bias)
    hyper = TrainHyper(lr=lr, steps=steps,
                       collapse_threshold=t.collapse_threshold if collapse_threshold is None else collapse_threshold)
    return RunConfig(t, NetSpec(tuple(widths)), init, runs, seed, hyper)


def load_config(path) -> RunConfig:
    """Read a ``key = value`` file (``#`` comments allowed)."""
    with open(path) as fh:
        return parse_config(fh.read())


def parse_config(text: str) -> RunConfig:
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = {"init": "scheme"}.get(key, key)
        if key not in _KEYS:
            raise ValidationError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ValidationError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _KEYS[key](value)
        except ValueError:
            raise ValidationError(f"line {lineno}: bad value for {key!r}: {value!r}") from None
        lines[key] = lineno
    try:
        return make_config(**values)
    except ValidationError as exc:
        # Point at the first key that plausibly caused the failure.
        for key in ("widths", "scheme", "reinit", "selection", "bias", "target", "runs"):
            if key in lines and key in str(exc):
                raise ValidationError(f"line {lines[key]}: {key}: {exc}") from None
        culprit = next((k for k in ("widths", "target", "reinit", "scheme") if k in lines), None)
        where = f"line {lines[culprit]}: {culprit}: " if culprit else ""
        raise ValidationError(f"{where}{exc}") from None


def emit_config(cfg: RunConfig) -> str:
    s, h = cfg.scheme, cfg.hyper
    items = [
        ("target", cfg.target.id.value),
        ("scheme", s.kind.value),
        ("reinit", s.reinit_count),
        ("selection", s.selection_mode.value),
        ("bias", s.bias_mode.value),
        ("widths", ",".join(map(str, cfg.spec.widths))),
        ("runs", cfg.runs),
        ("seed", cfg.base_seed),
        ("lr", repr(h.lr)),
        ("steps", h.steps),
        ("collapse_threshold", repr(h.collapse_threshold)),
    ]
    return "".join(f"{k} = {v}\n" for k, v in items)


# -- non-collapse campaign ---------------------------------------------------


@dataclass
class RunRow:
    run: int
    final_loss: float
    collapsed: bool
    diverged: bool
    output_variance: float


@dataclass
class Table1Result:
    config: RunConfig
    rows: list

    @property
    def non_collapse(self) -> int:
        return sum(not r.collapsed for r in self.rows)

    @property
    def non_collapse_pct(self) -> float:
        return 100.0 * self.non_collapse / len(self.rows)

    @property
    def ci95_pct(self) -> float:
        return 100.0 * proportion_ci95(self.non_collapse, len(self.rows))

    def to_csv(self, timestamp: bool = False) -> str:
        cfg = self.config
        out = io.StringIO()
        out.write("# schema=table1 v1 columns=run,seed,init,reinit,selection,final_loss,collapsed,diverged,output_variance\n")
        out.write(f"# target={cfg.target.id.value} widths={','.join(map(str, cfg.spec.widths))} "
                  f"grid=linspace[-1,1] samples={cfg.target.sample_count} lr={cfg.hyper.lr!r} "
                  f"steps={cfg.hyper.steps} collapse_threshold={cfg.hyper.collapse_threshold!r}\n")
        if timestamp:
            out.write(f"# generated={datetime.now(timezone.utc).isoformat(timespec='seconds')}\n")
        s = cfg.scheme
        for r in sorted(self.rows, key=lambda r: r.run):
            out.write(f"{r.run},{cfg.base_seed},{s.kind.value},{s.reinit_count},{_selection_label(s)},"
                      f"{r.final_loss!r},{int(r.collapsed)},{int(r.diverged)},{r.output_variance!r}\n")
        out.write(f"summary,{cfg.base_seed},{s.kind.value},{s.reinit_count},{_selection_label(s)},"
                  f"runs={len(self.rows)},non_collapse={self.non_collapse},"
                  f"pct={self.non_collapse_pct:.2f},ci95={self.ci95_pct:.2f}\n")
        return out.getvalue()


def run_table1(cfg: RunConfig, run_indices: Optional[Iterable[int]] = None, batch: int = 250,
               init_override=None) -> Table1Result:
    """Initialize and train ``cfg.runs`` networks; run ``i`` draws its
    initialization from stream ``(base_seed, trial=i)``, so it is unaffected by
    which other runs are included. ``init_override(i)`` replaces the
    initializer (used by tests to plant known parameters)."""
    indices = list(range(cfg.runs) if run_indices is None else run_indices)
    data = make_dataset(cfg.target)
    make = init_override or (lambda i: init_params(cfg.spec, cfg.scheme, cfg.base_seed, trial=i))
    rows = []
    for start in range(0, len(indices), batch):
        chunk = indices[start:start + batch]
        inits = [make(i) for i in chunk]
        reports = train_batch(cfg.spec, inits, data, cfg.hyper, seeds=chunk)
        for i, rep in zip(chunk, reports):
            rows.append(RunRow(i, rep.final_loss, rep.collapsed, rep.diverged, rep.output_variance))
    return Table1Result(cfg, rows)


# -- depth sweep --------------------------------------------------------------

FAMILIES = {
    "1d-w2": (1, 2, 1),
    "2d-w4": (2, 4, 2),
}


def family_widths(family: str, n: int) -> tuple:
    """Widths of an n-layer net (n - 1 hidden layers) in a named family."""
    try:
        m_in, width, m_out = FAMILIES[family]
    except KeyError:
        raise ValidationError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}") from None
    if n < 2:
        raise ValidationError("depth n must be >= 2")
    return (m_in,) + (width,) * (n - 1) + (m_out,)


def _selection_label(s: InitScheme) -> str:
    return s.selection_mode.value if s.kind.value.startswith("lps") else "-"


@dataclass
class Fig1Row:
    n: int
    scheme: InitScheme
    trials: int
    dead: int
    estimate: float
    ci95: float


def run_fig1(family: str, schemes: Sequence[InitScheme], depths: Iterable[int], trials: int = 1000,
             seed: int = 0) -> list:
    rows = []
    for n in depths:
        spec = NetSpec(family_widths(family, n))
        for scheme in schemes:
            rep = estimate_dead_prob(spec, scheme, trials, seed)
            rows.append(Fig1Row(n, scheme, trials, rep.dead_count, rep.estimate, rep.ci95_halfwidth))
    return rows


def fig1_csv(family: str, rows: Sequence[Fig1Row]) -> str:
    out = io.StringIO()
    out.write(f"# schema=fig1 v1 family={family} grid_step=0.1 dead_variance=1e-10\n")
    out.write("n,scheme,reinit,selection,trials,dead,estimate,ci95\n")
    for r in rows:
        s = r.scheme
        out.write(f"{r.n},{s.kind.value},{s.reinit_count},{_selection_label(s)},{r.trials},{r.dead},"
                  f"{r.estimate:.6f},{r.ci95:.6f}\n")
    return out.getvalue()
