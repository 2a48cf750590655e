"""Monte Carlo experiments: deviation inequalities, noise checks and the oracle bound.

Trials are split into fixed-size chunks of consecutive trial indices. Each
chunk draws its noise from the per-trial counter streams of
:func:`penselect.noise.trial_generator` and returns per-trial statistics;
chunks are reassembled in index order before any reduction. The chunk size
does not depend on the worker count, so 1 and k workers give identical
numbers.
"""

import datetime
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import __version__, bounds, select
from .errors import ConfigError, PenselectError
from .linspace import Subspace
from .models import ModelCollection, Partition, histogram_space, piecewise_poly_space, trig_space
from .noise import NoiseSpec, empirical_log_mgf, log_laplace, mgf_probe_lambda, sample_trials, verify_subgamma

KINDS = ("verify_noise", "deviation_chi", "deviation_sup", "oracle", "select_once")
DEVIATION_KINDS = ("verify_noise", "deviation_chi", "deviation_sup")
MIN_DEVIATION_TRIALS = 1000
CHUNK_TRIALS = 2048
THREADS_ENV = "PENSELECT_THREADS"
DEFAULT_X_GRID = (0.5, 1.0, 2.0, 4.0)
DEFAULT_U_Q = (2.0, 4.0, 8.0)
CSV_COLUMNS = ("experiment", "x", "u", "empirical", "bound", "stderr", "pass")
VOLATILE_KEYS = ("timestamp", "runtime_s")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    kind: str
    n: int
    trials: int
    seed: int
    noise: NoiseSpec
    collection: dict = field(default_factory=dict)
    penalty: dict = field(default_factory=dict)
    signal: dict = field(default_factory=dict)
    x_grid: list = None
    u_grid: list = None
    name: str = None

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        try:
            kind = doc["kind"]
            if kind not in KINDS:
                raise ConfigError(f"unknown kind {kind!r}; expected one of {KINDS}")
            n = int(doc["n"])
            trials = int(doc.get("trials", 1))
            seed = int(doc.get("seed", 0))
            noise = NoiseSpec.from_json(doc["noise"])
        except KeyError as e:
            raise ConfigError(f"missing config field {e.args[0]!r}") from None
        except ConfigError:
            raise
        except (PenselectError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid config: {e}") from None
        if n < 2:
            raise ConfigError("n must be >= 2")
        if trials < 1:
            raise ConfigError("trials must be >= 1")
        cfg = cls(kind, n, trials, seed, noise,
                  collection=dict(doc.get("collection", {})), penalty=dict(doc.get("penalty", {})),
                  signal=dict(doc.get("signal", {})), x_grid=doc.get("x_grid"), u_grid=doc.get("u_grid"),
                  name=doc.get("name"))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from None
        return cls.from_dict(doc)

    def validate(self):
        if self.kind in DEVIATION_KINDS and self.trials < MIN_DEVIATION_TRIALS:
            raise ConfigError(f"{self.kind} needs at least {MIN_DEVIATION_TRIALS} trials, got {self.trials}")
        if self.kind != "verify_noise" and not self.collection:
            raise ConfigError(f"{self.kind} needs a collection")
        if self.kind in ("oracle", "select_once") and not self.penalty:
            raise ConfigError(f"{self.kind} needs a penalty")
        for g in (self.x_grid, self.u_grid):
            if g is not None and (not isinstance(g, list) or any(float(v) < 0 for v in g)):
                raise ConfigError("grids must be lists of nonnegative numbers")

    def with_overrides(self, seed=None, trials=None):
        doc = self.to_json()
        if seed is not None:
            doc["seed"] = int(seed)
        if trials is not None:
            doc["trials"] = int(trials)
        return ExperimentConfig.from_dict(doc)

    def to_json(self):
        doc = {"kind": self.kind, "n": self.n, "trials": self.trials, "seed": self.seed,
               "noise": self.noise.to_json()}
        for key in ("collection", "penalty", "signal"):
            if getattr(self, key):
                doc[key] = getattr(self, key)
        if self.x_grid is not None:
            doc["x_grid"] = list(self.x_grid)
        if self.u_grid is not None:
            doc["u_grid"] = list(self.u_grid)
        if self.name:
            doc["name"] = self.name
        return doc


def shipped_configs():
    """Names of the JSON configs bundled with the package."""
    root = resources.files("penselect") / "configs"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def load_shipped(name):
    root = resources.files("penselect") / "configs"
    return ExperimentConfig.from_dict(json.loads((root / name).read_text()))


# ---------------------------------------------------------------------------
# Builders for spaces, collections, signals and penalties
# ---------------------------------------------------------------------------


def build_spaces(desc, n):
    """``[(label, Subspace)]`` for the deviation experiments."""
    kind = desc.get("type")
    family = desc.get("family", "histogram")
    d = int(desc.get("d", 0))
    if kind == "equal_blocks":
        out = []
        for k in desc["blocks"]:
            m = Partition.equal(n, int(k))
            S = histogram_space(m) if family == "histogram" else piecewise_poly_space(m, d)
            out.append((f"D={S.dim}", S))
        return out
    if kind == "trig":
        Dbar = int(desc["Dbar"])
        subsets = desc.get("subsets") or [list(range(2 * k + 1)) for k in range(Dbar + 1)]
        return [(f"D={len(s)}", trig_space(s, n, Dbar)) for s in subsets]
    if kind == "vectors":
        return [(f"span{i}", Subspace.span(np.asarray(v, dtype=np.float64).T)) for i, v in
                enumerate(desc["spaces"])]
    if kind in ("dyadic", "models"):
        coll = build_collection(desc, n)
        return [(f"m={coll.ids[k]}", coll.space(k)) for k in range(len(coll)) if coll.space(k) is not None]
    raise ConfigError(f"unknown collection type {kind!r}")


def build_collection(desc, n):
    kind = desc.get("type")
    family = desc.get("family", "histogram")
    d = int(desc.get("d", 0))
    try:
        if kind == "dyadic":
            return ModelCollection.dyadic(n, int(desc["min_block"]), family=family, d=d)
        if kind == "equal_blocks":
            from .models import ModelSpec, default_delta
            specs = [ModelSpec(i, family, Partition.equal(n, int(k)), default_delta(family, int(k)), d)
                     for i, k in enumerate(desc["blocks"])]
            return ModelCollection.from_specs(n, specs)
        if kind == "trig":
            return ModelCollection.trig(n, int(desc["Dbar"]), kind=desc.get("kind", "nested"),
                                        include_empty=bool(desc.get("include_empty", False)))
        if kind == "models":
            doc = dict(desc)
            doc.setdefault("n", n)
            return ModelCollection.from_json(doc)
    except KeyError as e:
        raise ConfigError(f"collection is missing field {e.args[0]!r}") from None
    raise ConfigError(f"unknown collection type {kind!r}")


def build_signal(desc, n):
    kind = desc.get("type", "step")
    if kind == "step":
        at = int(desc.get("at", n // 2))
        f = np.full(n, float(desc.get("low", 0.0)))
        f[at:] = float(desc.get("high", 1.0))
        return f
    if kind == "sine":
        x = np.arange(1, n + 1) / n
        return float(desc.get("amplitude", 1.0)) * np.sin(2.0 * math.pi * float(desc.get("freq", 1.0)) * x)
    if kind == "custom":
        f = np.asarray(desc["values"], dtype=np.float64)
        if f.shape != (n,):
            raise ConfigError(f"custom signal has length {f.size}, expected {n}")
        return f
    raise ConfigError(f"unknown signal type {kind!r}")


def build_penalty(desc, noise):
    try:
        return select.PenaltySpec(desc["mode"], float(desc["K"]), noise.sigma, noise.c,
                                  z=desc.get("z"), a=desc.get("a"), b=desc.get("b"), d=desc.get("d"),
                                  multiplier=float(desc.get("multiplier", 1.0)))
    except KeyError as e:
        raise ConfigError(f"penalty is missing field {e.args[0]!r}") from None


# ---------------------------------------------------------------------------
# Trial engine
# ---------------------------------------------------------------------------


def worker_count():
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return min(8, os.cpu_count() or 1)
    try:
        k = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(k, 1)


def run_trials(fn, trials, workers=None):
    """Apply ``fn(t0, t1) -> dict of per-trial arrays`` over fixed chunks; concatenate in order."""
    chunks = [(t0, min(t0 + CHUNK_TRIALS, trials)) for t0 in range(0, trials, CHUNK_TRIALS)]
    workers = worker_count() if workers is None else workers
    if workers == 1 or len(chunks) == 1:
        parts = [fn(t0, t1) for t0, t1 in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda c: fn(*c), chunks))
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def record(experiment, x, u, empirical, bound, stderr, **extra):
    empirical, bound, stderr = float(empirical), float(bound), float(stderr)
    rec = {"experiment": experiment, "x": None if x is None else float(x), "u": None if u is None else float(u),
           "empirical": empirical, "bound": bound, "stderr": stderr,
           "pass": bool(empirical <= bound + 3.0 * stderr)}
    rec.update(extra)
    return rec


def proportion_record(experiment, x, u, hits, bound, **extra):
    N = hits.size
    k = int(np.count_nonzero(hits))
    p = k / N
    return record(experiment, x, u, p, bound, math.sqrt(p * (1.0 - p) / N), hits=k, trials=N, **extra)


def _projection_stats(spaces, noise, n, seed):
    bases = [S.basis for _, S in spaces]

    def chunk(t0, t1):
        xi = sample_trials(noise, n, seed, t0, t1)
        out = {}
        for j, B in enumerate(bases):
            coef = xi @ B
            out[f"chi2_{j}"] = (coef * coef).sum(axis=1)
            out[f"inf_{j}"] = np.abs(coef @ B.T).max(axis=1)
        return out

    return chunk


def _u_grid(cfg, S):
    if cfg.u_grid is not None:
        return [float(u) for u in cfg.u_grid]
    s = cfg.noise
    return [q * (s.sigma + s.c) * S.lambda2 * math.log(cfg.n) for q in DEFAULT_U_Q]


def _x_grid(cfg):
    return [float(x) for x in (DEFAULT_X_GRID if cfg.x_grid is None else cfg.x_grid)]


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def run_verify_noise(cfg, workers=None):
    """Envelope certification, one empirical Laplace transform and Bernstein sums."""
    noise, n = cfg.noise, cfg.n
    cert = verify_subgamma(noise)
    recs = [record("subgamma_margin", None, None, cert["worst_margin"], 1e-12, 0.0,
                   worst_lambda=cert["worst_lambda"])]
    lam = mgf_probe_lambda(noise)

    def chunk(t0, t1):
        xi = sample_trials(noise, n, cfg.seed, t0, t1)
        w = np.exp(lam * xi)
        return {"sum": xi.sum(axis=1), "w1": w.sum(axis=1), "w2": (w * w).sum(axis=1)}

    st = run_trials(chunk, cfg.trials, workers)
    count = cfg.trials * n
    mean = st["w1"].sum() / count
    var = max(st["w2"].sum() / count - mean * mean, 0.0)
    se = math.sqrt(var / count) / mean
    exact = log_laplace(noise, lam)
    recs.append(record("mgf", None, None, abs(math.log(mean) - exact), 0.0, se, lam=lam,
                       log_mgf=math.log(mean), exact=exact))
    v2 = n * noise.sigma**2
    xs = cfg.u_grid if cfg.u_grid is not None else [1.0, 2.0]
    for u in xs:
        thr = bounds.bernstein_threshold(v2, noise.c, float(u))
        recs.append(proportion_record("bernstein_upper", None, u, st["sum"] >= thr, math.exp(-u), threshold=thr))
        recs.append(proportion_record("bernstein_lower", None, u, -st["sum"] >= thr, math.exp(-u), threshold=thr))
    return recs, {"certificate": cert}


def run_deviation_chi(cfg, workers=None):
    noise, n = cfg.noise, cfg.n
    spaces = build_spaces(cfg.collection, n)
    st = run_trials(_projection_stats(spaces, noise, n, cfg.seed), cfg.trials, workers)
    recs = []
    for j, (label, S) in enumerate(spaces):
        chi2, inf = st[f"chi2_{j}"], st[f"inf_{j}"]
        D = S.dim
        # Mean of |P xi|^2 is var * D for any centered homoscedastic noise.
        recs.append(record(f"chi2_mean[{label}]", None, None, abs(chi2.mean() - noise.variance * D), 0.0,
                           chi2.std(ddof=1) / math.sqrt(chi2.size), mean=float(chi2.mean()),
                           expected=noise.variance * D))
        for u in _u_grid(cfg, S):
            for x in _x_grid(cfg):
                thr = bounds.chi2_threshold(noise.sigma, noise.c, u, D, x)
                recs.append(proportion_record(f"chi_c1[{label}]", x, u, (chi2 >= thr) & (inf <= u),
                                              math.exp(-x), threshold=thr))
            recs.append(proportion_record(f"chi_c2[{label}]", None, u, inf >= u,
                                          bounds.chi_inf_tail(noise.sigma, noise.c, S.lambda2, u, n)))
    return recs, {"spaces": [{"label": lab, "dim": S.dim, "lambda2": S.lambda2} for lab, S in spaces]}


def run_deviation_sup(cfg, workers=None):
    """Suprema over ``{t in S : |t|_2 <= 1}`` through ``Z = |P xi|_2``."""
    noise, n = cfg.noise, cfg.n
    spaces = build_spaces(cfg.collection, n)
    st = run_trials(_projection_stats(spaces, noise, n, cfg.seed), cfg.trials, workers)
    k, s, c = bounds.KAPPA, noise.sigma, noise.c
    recs = []
    for j, (label, S) in enumerate(spaces):
        chi = np.sqrt(st[f"chi2_{j}"])
        inf = st[f"inf_{j}"]
        D = S.dim
        constant = D == 1 and np.allclose(np.abs(S.basis[:, 0]), 1.0 / math.sqrt(n))
        for x in _x_grid(cfg):
            for u in _u_grid(cfg, S):
                z = bounds.joint_sup_level(s, c, u, D, x)
                recs.append(proportion_record(f"sup_ball[{label}]", x, u, (chi >= z) & (inf <= u),
                                              math.exp(-x), threshold=z))
            if c == 0:
                thr = k * s * math.sqrt(D + x)
                recs.append(proportion_record(f"sup_gauss[{label}]", x, None, chi >= thr, math.exp(-x),
                                              threshold=thr))
            if constant:
                thr = k * (math.sqrt(n * (1.0 + x) * s * s) + c * (1.0 + x))
                recs.append(proportion_record(f"sum_abs[{label}]", x, None, math.sqrt(n) * chi >= thr,
                                              math.exp(-x), threshold=thr))
    return recs, {"spaces": [{"label": lab, "dim": S.dim, "lambda2": S.lambda2} for lab, S in spaces]}


def _refines(coll, k, at):
    return coll.family != "trig" and at in coll.partition(k).ends


def run_oracle(cfg, workers=None):
    noise, n = cfg.noise, cfg.n
    coll = build_collection(cfg.collection, n)
    spec = build_penalty(cfg.penalty, noise)
    f = build_signal(cfg.signal, n)
    pen = select.penalties(spec, coll)

    def chunk(t0, t1):
        Y = f[:, None] + sample_trials(noise, n, cfg.seed, t0, t1).T
        chosen = select.select_batch(Y, coll, pen)
        loss = np.empty(t1 - t0)
        for k in np.unique(chosen):
            cols = np.flatnonzero(chosen == k)
            r = f[:, None] - coll.fit(int(k), Y[:, cols])
            loss[cols] = (r * r).sum(axis=0)
        return {"chosen": chosen, "loss": loss}

    st = run_trials(chunk, cfg.trials, workers)
    loss, chosen = st["loss"], st["chosen"]
    terms = select.oracle_terms(coll, spec, f, noise, pen)
    mean = float(loss.mean())
    se = float(loss.std(ddof=1) / math.sqrt(loss.size)) if loss.size > 1 else 0.0
    recs = [record("oracle", None, None, mean, terms["rhs"], se, ratio=mean / terms["rhs"])]
    for key in ("rhs_bracket", "rhs_outside", "rhs_corollary", "rhs_c0_limit"):
        if key in terms:
            recs.append(record(f"oracle_{key[4:]}", None, None, mean, terms[key], se))
    ids, counts = np.unique(chosen, return_counts=True)
    top = np.argsort(-counts, kind="stable")[:10]
    summary = {
        "risk_mean": mean, "risk_stderr": se,
        "inf_term": terms["inf_term"], "argmin_id": terms["argmin_id"],
        "C": terms["C"], "R": terms["R"], "Sigma": terms["Sigma"], "z": terms["z"], "u": terms["u"],
        "lambda_bar_inf": coll.lambda_bar_inf, "lambda_bar_method": coll.lambda_bar_method,
        "lambda2_Sn": coll.lambda2_Sn, "models": len(coll),
        "selected": [{"id": coll.ids[int(ids[i])], "count": int(counts[i])} for i in top],
    }
    if cfg.signal.get("type", "step") == "step" and coll.family != "trig":
        at = int(cfg.signal.get("at", n // 2))
        ok = np.array([_refines(coll, int(k), at) for k in ids])
        summary["refine_fraction"] = float(counts[ok].sum() / loss.size)
    return recs, summary


def run_select_once(cfg, workers=None):
    noise, n = cfg.noise, cfg.n
    coll = build_collection(cfg.collection, n)
    spec = build_penalty(cfg.penalty, noise)
    f = build_signal(cfg.signal, n)
    Y = f + sample_trials(noise, n, cfg.seed, 0, 1)[0]
    res = select.select_model(Y, coll, spec)
    return [], {"selection": res.to_json()}


RUNNERS = {
    "verify_noise": run_verify_noise,
    "deviation_chi": run_deviation_chi,
    "deviation_sup": run_deviation_sup,
    "oracle": run_oracle,
    "select_once": run_select_once,
}


def run(cfg, workers=None):
    """Run one experiment and return its report dict."""
    t0 = time.perf_counter()
    recs, summary = RUNNERS[cfg.kind](cfg, workers)
    return {
        "kind": cfg.kind,
        "version": __version__,
        "config": cfg.to_json(),
        "records": recs,
        "summary": summary,
        "all_pass": all(r["pass"] for r in recs),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "runtime_s": time.perf_counter() - t0,
    }


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def stable_report(report):
    """The report without its volatile fields; equal configs and seeds give equal values."""
    return {k: v for k, v in report.items() if k not in VOLATILE_KEYS}


def report_json(report):
    return json.dumps(_jsonable(report), indent=2, sort_keys=True)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_csv(report):
    lines = [",".join(CSV_COLUMNS)]
    for r in report["records"]:
        lines.append(",".join(_cell(r[c]) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def csv_path(json_path):
    root, _ = os.path.splitext(json_path)
    return root + ".csv"


def write_report(report, path):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(report_json(report) + "\n")
    with open(csv_path(path), "w", newline="") as fh:
        fh.write(report_csv(report))
    return path, csv_path(path)


def run_suite(outdir, seed=None, trials=None, workers=None):
    """Run every shipped config; returns ``{name: report}`` and writes JSON/CSV pairs to ``outdir``."""
    reports = {}
    for name in shipped_configs():
        cfg = load_shipped(name).with_overrides(seed=seed, trials=trials)
        rep = run(cfg, workers)
        write_report(rep, os.path.join(outdir, name))
        reports[name] = rep
    return reports
