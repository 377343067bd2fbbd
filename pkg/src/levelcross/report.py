"""Run scenarios and write the Monte Carlo / oracle / formula comparison.

Each scenario yields rows. A row can carry a Monte Carlo estimate, an exact
oracle value and a closed-form value, and gets one verdict:

* the estimate must lie within ``max(floor, 4 * stderr)`` of the oracle (or
  of the formula when there is no oracle);
* oracle and formula must agree within ``2 * tol``;
* a stated expectation on a diagnostic verdict must be met.

A row with nothing to compare is ``n/a``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional

from . import estimators as _est
from . import formulas as _f
from . import lattice as _lat
from . import queue as _q
from .config import FormulaSpec, RunConfig, Scenario
from .errors import DegenerateDenominator, InvalidDistribution, InvalidQueueModel, LevelCrossError, ScenarioError

logger = logging.getLogger(__name__)

AGREE, DISAGREE, NA = "agree", "disagree", "n/a"
CSV_FIELDS = (
    "scenario", "quantity", "level_or_N", "mc_mean", "mc_stderr",
    "oracle_value", "formula_value", "formula_name", "verdict", "detail",
)


@dataclass
class ReportRow:
    scenario: str
    quantity: str
    level_or_N: Optional[float]
    mc_mean: Optional[float] = None
    mc_stderr: Optional[float] = None
    oracle_value: Optional[float] = None
    formula_value: Optional[float] = None
    formula_name: str = ""
    verdict: str = NA
    detail: str = ""
    extra: Dict[str, Any] = field(default_factory=dict)  # JSON only

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in CSV_FIELDS}
        out.update(self.extra)
        return out


@dataclass
class ScenarioReport:
    name: str
    kind: str
    rows: List[ReportRow] = field(default_factory=list)
    details: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None and all(r.verdict in (AGREE, NA) for r in self.rows)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "ok": self.ok,
            "error": self.error,
            "rows": [r.as_dict() for r in self.rows],
            "details": self.details,
        }


# ---------------------------------------------------------------------------
# comparison helpers


def _num(x) -> Optional[float]:
    return None if x is None else float(x)


def verdict(mc: Optional[_est.Estimate], oracle, formula, floor: float, tol: float) -> str:
    checks = []
    ref = oracle if oracle is not None else formula
    if mc is not None and ref is not None:
        checks.append(mc.contains(float(ref), k=4.0, floor=floor))
    if oracle is not None and formula is not None:
        checks.append(abs(float(oracle) - float(formula)) <= 2 * tol)
    if not checks:
        return NA
    return AGREE if all(checks) else DISAGREE


def evaluate_formula(name: str, inputs) -> Any:
    """Evaluate a closed form from a :class:`FormulaInputs` or a literal dict."""
    if isinstance(inputs, dict):
        if name in ("el_thm2", "el_cor1"):
            inputs = _f.FormulaInputs(**inputs)
        else:
            return getattr(_f, name)(**inputs)
    fi = inputs
    if name == "el_thm2":
        return _f.el_thm2(fi)
    if name == "el_cor1":
        return _f.el_cor1(fi)
    if name == "el_thm4":
        if fi.d is None:
            raise ValueError("el_thm4 needs a single positive atom")
        return _f.el_thm4(fi.d, fi.es_tau, fi.p_pos)
    if name == "el_pure":
        return _f.el_pure(fi.a, fi.es_tau, fi.p_nonzero)
    if name == "el_queue":
        return _f.el_queue(fi.a, fi.es_tau)
    raise ValueError(f"unknown formula {name!r}")


def _exact_str(x) -> Optional[str]:
    return None if x is None else _lat.format_exact(x)


def _inputs_dict(fi) -> dict:
    if isinstance(fi, dict):
        return {k: _exact_str(v) for k, v in fi.items()}
    return {k: _exact_str(getattr(fi, k)) for k in ("a", "b", "es_tau", "p_pos", "p_nonzero", "d")}


def _spec(sc: Scenario, details: dict):
    if not sc.use_oracle or sc.distribution is None:
        return None
    try:
        return _lat.spec_from_distribution(sc.distribution)
    except InvalidDistribution as e:
        details["oracle_note"] = f"no lattice oracle: {e}"
        return None


def _solve_dict(solve: _lat.ChainSolve) -> dict:
    return {
        "ceiling_used": solve.ceiling_used,
        "est_truncation_error": solve.est_truncation_error,
        "exact": solve.exact,
        "trace": [[c, g] for c, g in solve.trace],
    }


def _formula_at(sc: Scenario, spec, alpha, details: dict, key: str):
    """``(value, name)`` of the configured closed form at one level."""
    fs: Optional[FormulaSpec] = sc.formula
    if fs is None:
        return None, ""
    try:
        if fs.inputs == "oracle":
            if spec is None:
                details.setdefault("formula_notes", {})[key] = "oracle inputs need a lattice law"
                return None, fs.name
            fi = _lat.formula_inputs(spec, alpha, sc.oracle)
        else:
            fi = fs.inputs
        details.setdefault("formula_inputs", {})[key] = _inputs_dict(fi)
        return evaluate_formula(fs.name, fi), fs.name
    except (DegenerateDenominator, ValueError) as e:
        details.setdefault("formula_notes", {})[key] = str(e)
        return None, fs.name


def _row(sc, quantity, level, est, oracle, formula, fname, detail="", extra=None) -> ReportRow:
    tol = sc.oracle.tol if sc.oracle is not None else 0.0
    ex = dict(extra or {})
    if est is not None:
        ex["estimate"] = est.as_dict()
    if oracle is not None:
        ex["oracle_exact"] = _exact_str(oracle)
    if formula is not None:
        ex["formula_exact"] = _exact_str(formula)
    return ReportRow(
        scenario=sc.name,
        quantity=quantity,
        level_or_N=_num(level),
        mc_mean=None if est is None else est.mean,
        mc_stderr=None if est is None else est.stderr,
        oracle_value=_num(oracle),
        formula_value=_num(formula),
        formula_name=fname,
        verdict=verdict(est, oracle, formula, sc.mc_floor, tol),
        detail=detail,
        extra=ex,
    )


# ---------------------------------------------------------------------------
# scenario kinds


def _levels_rows(sc: Scenario, rep: ScenarioReport, levels, batch):
    spec = _spec(sc, rep.details)
    solves = {}
    for a in levels:
        est = batch.el(a) if batch is not None else None
        oracle = None
        if spec is not None:
            solve = _lat.exact_EL(spec, a, sc.oracle)
            oracle = solve.expected_crossings
            solves[repr(float(a))] = _solve_dict(solve)
        formula, fname = _formula_at(sc, spec, a, rep.details, repr(float(a)))
        rep.rows.append(_row(sc, "E L_alpha", a, est, oracle, formula, fname))
    if solves:
        rep.details["oracle_solves"] = solves
    return spec


def run_walk_levels(sc: Scenario, rep: ScenarioReport):
    batch = _est.simulate_excursions(sc.distribution, sc.levels, sc.mc)
    _est._gate(batch, sc.mc)
    rep.details["censored_fraction"] = batch.censored_fraction
    _levels_rows(sc, rep, sc.levels, batch)


def run_alpha_ladder(sc: Scenario, rep: ScenarioReport):
    o = sc.options
    ladder = _est.estimate_alpha_ladder(
        sc.distribution, sc.levels[0], o["rungs"], sc.mc,
        increment=o.get("increment"),
        check=bool(o.get("check", True)),
        confidence=float(o.get("confidence", 0.99)),
        margin=float(o.get("margin", 0.05)),
    )
    rungs = [a for a, _ in ladder]
    rep.details["rungs"] = rungs
    spec = _spec(sc, rep.details)
    for a, est in ladder:
        oracle = _lat.exact_EL(spec, a, sc.oracle).expected_crossings if spec is not None else None
        formula, fname = _formula_at(sc, spec, a, rep.details, repr(float(a)))
        rep.rows.append(_row(sc, "E L_alpha", a, est, oracle, formula, fname))


_EPISODE_FIELDS = (
    ("E S_before_1", "e_sbefore_1", 1, "mean_before"),
    ("E S_before_2", "e_sbefore_2", 2, "mean_before"),
    ("E S_after_1", "e_safter_1", 1, "mean_after"),
    ("E S_after_2", "e_safter_2", 2, "mean_after"),
)


def run_assumption1(sc: Scenario, rep: ScenarioReport):
    o = sc.options
    alpha = sc.levels[0]
    diag = _est.assumption1_diagnostic(
        sc.distribution, alpha, sc.mc,
        confidence=float(o.get("confidence", 0.99)),
        margin=float(o.get("margin", 0.05)),
    )
    rep.details["diagnostic"] = diag.as_dict()
    spec = _spec(sc, rep.details)
    prof = None
    if spec is not None:
        prof = _lat.crossing_profiles(spec, alpha, sc.oracle, require_second=False)
        rep.details["oracle_solve"] = _solve_dict(prof)
        if prof.episode2_profile is not None:
            chk = _lat.certify_assumption1(prof)
            rep.details["oracle_check"] = {
                "positivity": chk.positivity, "os1": chk.os1, "os2": chk.os2, "b": _exact_str(chk.b),
            }
    for label, attr, ep, mean_attr in _EPISODE_FIELDS:
        profile = None
        if prof is not None:
            profile = prof.episode1_profile if ep == 1 else prof.episode2_profile
        oracle = getattr(profile, mean_attr) if profile is not None else None
        rep.rows.append(_row(sc, label, alpha, getattr(diag, attr), oracle, None, ""))
    expect = o.get("expect", {}) or {}
    for key in ("holds_os1", "holds_os2", "positivity"):
        seen = getattr(diag, key).value
        want = expect.get(key)
        v = NA if want is None else (AGREE if want == seen else DISAGREE)
        detail = seen if want is None else f"{seen} (expected {want})"
        rep.rows.append(ReportRow(sc.name, key, float(alpha), verdict=v, detail=detail))


def run_queue_sweep(sc: Scenario, rep: ScenarioReport):
    base = sc.queue
    control = base.is_lattice_control()
    rep.details["lattice_control"] = control
    for N in sc.levels:
        model = base.with_capacity(N)
        est = _q.estimate_EL_N(model, sc.mc)
        oracle = None
        extra = {"standalone_fraction": est.standalone_fraction, "s_tau_mean": est.s_tau_mean}
        if sc.use_oracle:
            try:
                qs = _q.exact_EL_N(model)
                oracle = qs.expected_losses
                extra["oracle_s_tau"] = _exact_str(qs.mean_s_tau)
            except InvalidQueueModel as e:
                rep.details["oracle_note"] = str(e)
        formula, fname = None, ""
        if sc.formula is not None:
            fname = sc.formula.name
            if sc.formula.inputs == "oracle":
                if oracle is not None:
                    fi = {"a": base.x_law.mean, "es_tau": qs.mean_s_tau}
                    formula = evaluate_formula(fname, fi)
                    extra["formula_inputs"] = _inputs_dict(fi)
            else:
                formula = evaluate_formula(fname, sc.formula.inputs)
        lo = est.ci95[0]
        dich = (est.ci95[0] <= 1.0 <= est.ci95[1]) if control else lo > 1.0
        extra["dichotomy_ok"] = dich
        detail = ("ci95 contains 1" if control else "ci95 lower > 1") + (": yes" if dich else ": no")
        row = _row(sc, "E L_N", N, est, oracle, formula, fname, detail, extra)
        if sc.options.get("check_dichotomy") and not dich:
            row.verdict = DISAGREE
        rep.rows.append(row)


def run_exact(sc: Scenario, rep: ScenarioReport):
    spec = _levels_rows(sc, rep, sc.levels, None)
    if spec is None:
        raise InvalidDistribution("exact scenarios need a lattice law")
    st = _lat.exact_S_tau(spec, sc.oracle)
    rep.details["S_tau_law"] = {_exact_str(k): _exact_str(v) for k, v in sorted(st.absorption_law.items())}
    rep.rows.append(_row(sc, "E S_tau|X_1>0", None, None, st.mean_S_tau, None, ""))
    pa = sc.options.get("profile_alpha")
    if pa is not None:
        prof = _lat.crossing_profiles(spec, pa, sc.oracle, require_second=False)
        rep.details["profiles"] = {
            f"episode{i}": None if ep is None else {
                "prob": _exact_str(ep.prob),
                "law_before": {_exact_str(k): _exact_str(v) for k, v in sorted(ep.law_before().items())},
                "law_after": {_exact_str(k): _exact_str(v) for k, v in sorted(ep.law_after().items())},
            }
            for i, ep in ((1, prof.episode1_profile), (2, prof.episode2_profile))
        }
        for label, _, ep, mean_attr in _EPISODE_FIELDS:
            profile = prof.episode1_profile if ep == 1 else prof.episode2_profile
            if profile is not None:
                rep.rows.append(_row(sc, label, pa, None, getattr(profile, mean_attr), None, ""))
        rep.rows.append(_row(sc, "b", pa, None, prof.b, None, ""))


RUNNERS = {
    "walk_levels": run_walk_levels,
    "alpha_ladder": run_alpha_ladder,
    "assumption1": run_assumption1,
    "queue_sweep": run_queue_sweep,
    "exact": run_exact,
}


def run_scenario(sc: Scenario) -> ScenarioReport:
    rep = ScenarioReport(sc.name, sc.kind)
    try:
        RUNNERS[sc.kind](sc, rep)
    except (LevelCrossError, ValueError, ArithmeticError) as e:
        rep.error = f"{type(e).__name__}: {e}"
        err = ScenarioError(sc.name, e)
        err.report = rep  # rows finished before the failure
        raise err from e
    return rep


# ---------------------------------------------------------------------------
# output


def _clean(x):
    """JSON-safe copy: NaN/inf become null, tuples lists, exact numbers strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, Fraction):
        return _lat.format_exact(x)
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        return _clean(x.item())
    return x


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rep: ScenarioReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")  # RFC 4180 line endings
        w.writerow(CSV_FIELDS)
        for r in rep.rows:
            w.writerow([_cell(getattr(r, k)) for k in CSV_FIELDS])


def write_json(rep: ScenarioReport, path: Path) -> None:
    text = json.dumps(_clean(rep.as_dict()), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n")


def emit_plotdata(report: ScenarioReport, out_path) -> Path:
    """``alpha,mean,lo,hi,oracle`` rows for the ``E L_alpha`` rows of a report."""
    out_path = Path(out_path)
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["alpha", "mean", "lo", "hi", "oracle"])
        for r in report.rows:
            if r.quantity != "E L_alpha" or r.mc_mean is None:
                continue
            lo, hi = r.extra["estimate"]["ci95"]
            w.writerow([_cell(r.level_or_N), _cell(r.mc_mean), _cell(lo), _cell(hi), _cell(r.oracle_value)])
    return out_path


@dataclass
class RunResult:
    reports: List[ScenarioReport]
    errors: List[ScenarioError]

    @property
    def exit_code(self) -> int:
        return 0 if not self.errors and all(r.ok for r in self.reports) else 1


def run(cfg: RunConfig, out_dir, plotdata: bool = False) -> RunResult:
    """Run every scenario in order and write ``<name>.csv`` / ``<name>.json``.

    A failing scenario is written with its error and the run goes on, so
    earlier and later results are always flushed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports, errors = [], []
    for sc in cfg.scenarios:
        logger.info("scenario %s (%s)", sc.name, sc.kind)
        try:
            rep = run_scenario(sc)
        except ScenarioError as e:
            logger.error("%s", e)
            errors.append(e)
            rep = e.report
        write_csv(rep, out / f"{sc.name}.csv")
        write_json(rep, out / f"{sc.name}.json")
        if plotdata and sc.kind in ("walk_levels", "alpha_ladder") and rep.rows:
            emit_plotdata(rep, out / f"{sc.name}.plot.csv")
        reports.append(rep)
    return RunResult(reports, errors)
