"""End-to-end scenario runs: from a config file to a catchment report.

A scenario names a topology (file or generator), how the destination is
attached, optional transforms (prepending chains, extra or removed
attachments, shortest-path preference), the inference mode, observation
files, and an optional planning request. Running one produces a report with
an audit trail of the stages that executed, per-node results, catchment
bounds and expected loads, and is byte-for-byte reproducible.
"""
from __future__ import annotations

import json
import logging
import random
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .bgpsim import run_bgp, simulated_catchment
from .errors import (
    DestinationSpecError,
    InputError,
    TopologyParseError,
    UnknownNodeError,
)
from .inference import (
    RouteProbabilities,
    RoutingFunction,
    catchment_bounds,
    certain_inference,
    expected_load,
    probabilistic_inference,
    shortest_path_transform,
)
from .oracles import (
    OracleSet,
    apply_oracles,
    exact_conditional_distribution,
    monte_carlo_inference,
    parse_oracle_file,
)
from .planner import MeasurementPlan, export_plan_csv, greedy_plan
from .rgraph import RGraph, build_rgraph, rgraph_dot, rgraph_edgelist
from .topology import (
    AugmentedTopology,
    DestinationSpec,
    Relationship,
    Topology,
    apply_prepending,
    attach_destination,
    derive_vf_policies,
    generate_random_topology,
    parse_caida_asrel,
    parse_topology,
)

logger = logging.getLogger(__name__)

_REL_TOKENS = {
    "p2c": Relationship.P2C,
    "p2p": Relationship.P2P,
    "c2p": Relationship.C2P,
}
_EXACT_POSTERIOR_LIMIT = 14


@dataclass
class ScenarioConfig:
    """Everything needed to reproduce one catchment analysis."""

    topology_file: str | None = None
    topology_text: str | None = None
    generate: dict | None = None
    attachments: dict[int, str] = field(default_factory=dict)
    attachment_rels: dict[int, Relationship] = field(default_factory=dict)
    moas_origins: tuple[int, ...] = ()
    dst_id: int | None = None
    prepends: tuple[tuple[str, int], ...] = ()
    mode: str = "certain"
    sp: bool = False
    oracle_file: str | None = None
    oracle_text: str | None = None
    posterior: str | None = None
    posterior_trials: int = 20_000
    plan_budget: int | None = None
    plan_candidates: tuple[int, ...] | None = None
    seed: int = 0

    def echo(self) -> dict:
        """JSON-compatible copy of the configuration, for the report."""
        return {
            "topology_file": self.topology_file,
            "topology_inline": self.topology_text is not None,
            "generate": self.generate,
            "attachments": {str(k): v for k, v in sorted(self.attachments.items())},
            "attachment_rels": {
                str(k): v.name.lower() for k, v in sorted(self.attachment_rels.items())
            },
            "moas_origins": list(self.moas_origins),
            "dst_id": self.dst_id,
            "prepends": [list(p) for p in self.prepends],
            "mode": self.mode,
            "sp": self.sp,
            "oracle_file": self.oracle_file,
            "oracle_inline": self.oracle_text is not None,
            "posterior": self.posterior,
            "posterior_trials": self.posterior_trials,
            "plan_budget": self.plan_budget,
            "plan_candidates": (
                list(self.plan_candidates) if self.plan_candidates is not None else None
            ),
            "seed": self.seed,
        }


def parse_scenario_file(text: str, base_dir: str | Path | None = None) -> ScenarioConfig:
    """Parse the line-oriented scenario format.

    Directives: ``topology file <path>`` / ``topology generate k=v ...``,
    ``attach <node> <ingress> [rel]``, ``moas <node>...``, ``dst_id <n>``,
    ``prepend <ingress> <k>``, ``mode certain|probabilistic``, ``sp on|off``,
    ``oracles <path>``, ``posterior exact|monte-carlo [trials]``,
    ``plan budget <B>``, ``plan candidates <node>...|uncertain``,
    ``seed <n>``. ``#`` comments. Paths are resolved against ``base_dir``.
    """
    cfg = ScenarioConfig()
    base = Path(base_dir) if base_dir is not None else None

    def resolve(p: str) -> str:
        path = Path(p)
        if base is not None and not path.is_absolute():
            path = base / path
        return str(path)

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0]
        try:
            if key == "topology" and len(parts) >= 2 and parts[1] == "file":
                cfg.topology_file = resolve(" ".join(parts[2:]))
            elif key == "topology" and len(parts) >= 2 and parts[1] == "generate":
                params: dict = {}
                for token in parts[2:]:
                    name, _, value = token.partition("=")
                    if name not in ("n", "avg_degree", "peer_fraction", "seed"):
                        raise TopologyParseError(
                            f"unknown generator parameter {name!r}", line_no
                        )
                    params[name] = (
                        int(value) if name in ("n", "seed") else float(value)
                    )
                if "n" not in params:
                    raise TopologyParseError("generator needs n=<nodes>", line_no)
                cfg.generate = params
            elif key in ("attach", "add_ingress") and len(parts) in (3, 4):
                node = int(parts[1])
                if node in cfg.attachments:
                    raise TopologyParseError(
                        f"node {node} attached twice", line_no
                    )
                cfg.attachments[node] = parts[2]
                if len(parts) == 4:
                    if parts[3] not in _REL_TOKENS:
                        raise TopologyParseError(
                            f"unknown relationship {parts[3]!r}", line_no
                        )
                    cfg.attachment_rels[node] = _REL_TOKENS[parts[3]]
            elif key == "remove_ingress" and len(parts) == 2:
                found = [n for n, m in cfg.attachments.items() if m == parts[1]]
                if not found:
                    raise TopologyParseError(
                        f"no attachment uses ingress {parts[1]!r}", line_no
                    )
                for n in found:
                    del cfg.attachments[n]
                    cfg.attachment_rels.pop(n, None)
            elif key == "moas" and len(parts) >= 2:
                cfg.moas_origins = tuple(int(p) for p in parts[1:])
            elif key == "dst_id" and len(parts) == 2:
                cfg.dst_id = int(parts[1])
            elif key == "prepend" and len(parts) == 3:
                cfg.prepends = cfg.prepends + ((parts[1], int(parts[2])),)
            elif key == "mode" and len(parts) == 2:
                if parts[1] not in ("certain", "probabilistic"):
                    raise TopologyParseError(f"unknown mode {parts[1]!r}", line_no)
                cfg.mode = parts[1]
            elif key == "sp" and len(parts) == 2 and parts[1] in ("on", "off"):
                cfg.sp = parts[1] == "on"
            elif key == "oracles" and len(parts) >= 2:
                cfg.oracle_file = resolve(" ".join(parts[1:]))
            elif key == "posterior" and len(parts) in (2, 3):
                if parts[1] not in ("exact", "monte-carlo"):
                    raise TopologyParseError(
                        f"unknown posterior method {parts[1]!r}", line_no
                    )
                cfg.posterior = parts[1]
                if len(parts) == 3:
                    cfg.posterior_trials = int(parts[2])
            elif key == "plan" and len(parts) >= 3 and parts[1] == "budget":
                cfg.plan_budget = int(parts[2])
            elif key == "plan" and len(parts) >= 3 and parts[1] == "candidates":
                if parts[2] == "uncertain":
                    cfg.plan_candidates = None
                else:
                    cfg.plan_candidates = tuple(int(p) for p in parts[2:])
            elif key == "seed" and len(parts) == 2:
                cfg.seed = int(parts[1])
            else:
                raise TopologyParseError(f"unrecognized directive {raw!r}", line_no)
        except ValueError:
            raise TopologyParseError(f"bad number in {raw!r}", line_no) from None
    return cfg


def _load_topology(cfg: ScenarioConfig) -> Topology:
    if sum(x is not None for x in (cfg.topology_file, cfg.topology_text, cfg.generate)) != 1:
        raise InputError("scenario needs exactly one topology source")
    if cfg.generate is not None:
        params = dict(cfg.generate)
        n = params.pop("n")
        return generate_random_topology(n, **params)
    text = cfg.topology_text
    if text is None:
        text = Path(cfg.topology_file).read_text()
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "|" in line:
            return parse_caida_asrel(text)
        break
    return parse_topology(text)


def build_augmented(cfg: ScenarioConfig) -> AugmentedTopology:
    """Topology + destination + transforms, policies enabled."""
    topology = derive_vf_policies(_load_topology(cfg))
    if cfg.moas_origins:
        spec = DestinationSpec(moas_origins=cfg.moas_origins, dst_id=cfg.dst_id)
    elif cfg.attachments:
        spec = DestinationSpec(
            attachments=cfg.attachments,
            attachment_rels=cfg.attachment_rels,
            dst_id=cfg.dst_id,
        )
    else:
        raise DestinationSpecError("scenario attaches the destination nowhere")
    aug = attach_destination(topology, spec)
    for ingress, k in cfg.prepends:
        aug = apply_prepending(aug, ingress, k)
    return aug


def _load_oracles(cfg: ScenarioConfig) -> OracleSet | None:
    if cfg.oracle_text is not None:
        return parse_oracle_file(cfg.oracle_text)
    if cfg.oracle_file is not None:
        return parse_oracle_file(Path(cfg.oracle_file).read_text())
    return None


@dataclass
class ScenarioReport:
    """Outcome of one scenario run; JSON- and CSV-exportable."""

    config: dict
    stages: tuple[str, ...]
    ingress_points: tuple[str, ...]
    nodes: tuple[int, ...]
    routes: dict[int, str | None]
    probs: dict[int, dict[str, float]] | None
    prob_status: dict[int, str] | None
    certain_counts: dict[str, int]
    uncertain_count: int
    bounds: dict[str, tuple[int, int]]
    expected_loads: dict[str, float] | None
    probability_mass_deficit: dict[int, float]
    set_route_calls: int | None
    skipped_observations: tuple[tuple[int, str], ...]
    plan: MeasurementPlan | None
    rgraph_nodes: int
    rgraph_edges: int
    seed: int

    def to_json(self) -> str:
        doc = {
            "config": self.config,
            "stages": list(self.stages),
            "ingress_points": list(self.ingress_points),
            "node_count": len(self.nodes),
            "routes": {str(n): self.routes[n] for n in self.nodes},
            "probs": (
                {
                    str(n): {m: p for m, p in sorted(self.probs[n].items())}
                    for n in self.nodes
                }
                if self.probs is not None
                else None
            ),
            "prob_status": (
                {str(n): self.prob_status[n] for n in self.nodes}
                if self.prob_status is not None
                else None
            ),
            "certain_counts": self.certain_counts,
            "uncertain_count": self.uncertain_count,
            "bounds": {m: list(b) for m, b in self.bounds.items()},
            "expected_loads": self.expected_loads,
            "probability_mass_deficit": {
                str(n): v for n, v in sorted(self.probability_mass_deficit.items())
            },
            "set_route_calls": self.set_route_calls,
            "skipped_observations": [list(s) for s in self.skipped_observations],
            "plan": (
                {
                    "selected": list(self.plan.selected),
                    "step_values": list(self.plan.step_values),
                    "baseline_value": self.plan.baseline_value,
                    "budget": self.plan.budget,
                    "method": self.plan.method,
                    "notes": list(self.plan.notes),
                }
                if self.plan is not None
                else None
            ),
            "rgraph": {"nodes": self.rgraph_nodes, "edges": self.rgraph_edges},
            "seed": self.seed,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def to_node_csv(self) -> str:
        """Rows ``node,route,pi_<ingress>...,status`` over the report universe."""
        cols = ["node", "route"]
        cols += [f"pi_{m}" for m in self.ingress_points]
        cols += ["status"]
        lines = [",".join(cols)]
        for n in self.nodes:
            row = [str(n), self.routes[n] or ""]
            for m in self.ingress_points:
                if self.probs is None:
                    row.append("")
                else:
                    row.append(repr(self.probs[n].get(m, 0.0)))
            row.append(self.prob_status[n] if self.prob_status else "")
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def run_scenario(cfg: ScenarioConfig) -> tuple[ScenarioReport, RGraph]:
    """Execute the full pipeline for one scenario.

    Returns the report plus the forwarding graph it was computed on (after
    any shortest-path pruning), so callers can chain further analyses.
    """
    stages: list[str] = []
    aug = build_augmented(cfg)
    stages.append("attach-destination")
    g = build_rgraph(aug, cfg.seed)
    stages.append("forwarding-graph")
    if cfg.sp:
        g = shortest_path_transform(g)
        stages.append("shortest-path-pruning")

    routes = certain_inference(g)
    stages.append("certain-inference")

    oracles = _load_oracles(cfg)
    want_probs = (
        cfg.mode == "probabilistic" or bool(oracles) or cfg.plan_budget is not None
    )
    probs: RouteProbabilities | None = None
    prob_status: dict[int, str] | None = None
    set_route_calls: int | None = None
    skipped: tuple[tuple[int, str], ...] = ()

    if want_probs:
        probs = probabilistic_inference(g, routes)
        stages.append("probabilistic-inference")
        prob_status = {n: "exact" for n in g.report_nodes}

    plan_probs = probs
    plan_routes = routes
    if oracles:
        applied = apply_oracles(g, routes, probs, oracles)
        routes, probs = applied.routes, applied.probs
        plan_routes, plan_probs = routes, probs
        set_route_calls = applied.set_route_calls
        skipped = applied.skipped
        stages.append("observation-propagation")
        for n in g.report_nodes:
            if n in applied.stale_probability_nodes:
                prob_status[n] = "pre-observation"
        if cfg.mode == "probabilistic":
            method = cfg.posterior
            if method is None:
                method = (
                    "exact" if len(g.nodes) <= _EXACT_POSTERIOR_LIMIT else "monte-carlo"
                )
            if method == "exact":
                probs = exact_conditional_distribution(g, None, oracles)
                stages.append("posterior-exact")
                status = "posterior-exact"
            else:
                estimate = monte_carlo_inference(
                    g, None, cfg.posterior_trials, cfg.seed, oracles
                )
                probs = estimate.probs
                stages.append("posterior-sampling")
                status = "posterior-sampled"
            prob_status = {n: status for n in g.report_nodes}
            plan_probs = probs

    universe = g.report_nodes
    routes_view = {n: routes[n] for n in universe}
    probs_view = {n: probs.get(n, {}) for n in universe} if probs is not None else None
    ingress_points = tuple(sorted(set(g.ingress_map.values())))

    certain_counts = {m: 0 for m in ingress_points}
    for n in universe:
        if routes_view[n] is not None:
            certain_counts[routes_view[n]] += 1
    uncertain = len(universe) - sum(certain_counts.values())
    bounds = catchment_bounds(routes_view, ingress_points, len(universe))

    loads = None
    deficit: dict[int, float] = {}
    if probs_view is not None:
        loads = expected_load(probs_view, {n: 1.0 for n in universe})
        for n in universe:
            mass = sum(probs_view[n].values())
            if mass < 1.0 - 1e-9:
                deficit[n] = mass

    plan: MeasurementPlan | None = None
    if cfg.plan_budget is not None:
        if cfg.plan_candidates is not None:
            candidates: tuple[int, ...] = cfg.plan_candidates
        else:
            candidates = tuple(
                n for n in universe
                if plan_routes.get(n) is None and plan_probs.get(n)
            )
        plan = greedy_plan(g, plan_routes, plan_probs, candidates, cfg.plan_budget)
        stages.append("measurement-planning")

    if cfg.mode == "certain" and not oracles and cfg.plan_budget is None:
        probs_view = None
        prob_status = None
        loads = None

    report = ScenarioReport(
        config=cfg.echo(),
        stages=tuple(stages),
        ingress_points=ingress_points,
        nodes=universe,
        routes=routes_view,
        probs=probs_view,
        prob_status=prob_status,
        certain_counts=certain_counts,
        uncertain_count=uncertain,
        bounds=bounds,
        expected_loads=loads,
        probability_mass_deficit=deficit,
        set_route_calls=set_route_calls,
        skipped_observations=skipped,
        plan=plan,
        rgraph_nodes=len(g.nodes),
        rgraph_edges=g.num_edges,
        seed=cfg.seed,
    )
    return report, g


def write_report_files(
    report: ScenarioReport, g: RGraph, out_dir: str | Path
) -> list[Path]:
    """Write report.json, nodes.csv, the graph exports, and any plan CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, content in [
        ("report.json", report.to_json()),
        ("nodes.csv", report.to_node_csv()),
        ("rgraph.edges", rgraph_edgelist(g)),
        ("rgraph.dot", rgraph_dot(g)),
    ]:
        path = out / name
        path.write_text(content)
        written.append(path)
    if report.plan is not None:
        path = out / "plan.csv"
        path.write_text(export_plan_csv(report.plan))
        written.append(path)
    return written


# -- prepending sweeps -----------------------------------------------------------


def _splice_chain(g: RGraph, ingress: str, k: int) -> RGraph:
    """Insert a k-node virtual chain between the root and one ingress.

    Pure graph surgery: everything away from that ingress keeps its edges,
    so sweeping k needs no further propagation runs.
    """
    if k == 0:
        return g
    affected = sorted(n for n, m in g.ingress_map.items() if m == ingress)
    if not affected:
        raise UnknownNodeError(f"unknown ingress {ingress!r}")
    first = max(g.nodes) + 1
    chain = list(range(first, first + k))

    parents = {n: list(ps) for n, ps in g.parents.items()}
    parents[chain[0]] = [g.root]
    for a, b in zip(chain, chain[1:]):
        parents[b] = [a]
    tail = chain[-1]
    for n in affected:
        if g.root in parents[n]:
            parents[n] = [p for p in parents[n] if p != g.root] + [tail]

    ingress_map = {n: m for n, m in g.ingress_map.items() if m != ingress}
    ingress_map[chain[0]] = ingress
    return RGraph.from_parent_map(
        g.root,
        ingress_map,
        parents,
        nodes=tuple(g.nodes) + tuple(chain),
        report_nodes=g.report_nodes,
    )


def prepending_sweep(
    cfg: ScenarioConfig, ingress: str, k_max: int
) -> list[dict]:
    """Certain catchments for every prepend length 0..k_max at one ingress.

    The forwarding graph is built once; each k only splices a chain and
    re-runs the inference passes. Without shortest-path preference the
    chain cannot change any original node's options, so all entries match
    k=0 there (lengths do not matter to eligibility).
    """
    if k_max < 0:
        raise InputError(f"k_max must be >= 0, got {k_max}")
    aug = build_augmented(cfg)
    base = build_rgraph(aug, cfg.seed)
    if ingress not in set(base.ingress_map.values()):
        raise UnknownNodeError(f"unknown ingress {ingress!r}")

    entries = []
    for k in range(k_max + 1):
        g = _splice_chain(base, ingress, k)
        if cfg.sp:
            g = shortest_path_transform(g)
        routes = certain_inference(g)
        universe = g.report_nodes
        routes_view = {n: routes[n] for n in universe}
        ingress_points = tuple(sorted(set(g.ingress_map.values())))
        counts = {m: 0 for m in ingress_points}
        for n in universe:
            if routes_view[n] is not None:
                counts[routes_view[n]] += 1
        entry: dict = {
            "k": k,
            "certain_counts": counts,
            "uncertain": len(universe) - sum(counts.values()),
            "bounds": {
                m: list(b)
                for m, b in catchment_bounds(
                    routes_view, ingress_points, len(universe)
                ).items()
            },
        }
        if cfg.mode == "probabilistic":
            probs = probabilistic_inference(g, routes)
            entry["expected_sizes"] = {
                m: sum(probs[n].get(m, 0.0) for n in universe)
                for m in ingress_points
            }
        entry["routes"] = {str(n): routes_view[n] for n in universe}
        entries.append(entry)
    return entries


# -- simulation cross-checks -----------------------------------------------------


@dataclass
class SimulationComparison:
    """Predicted expected catchment sizes vs. seeded simulation runs."""

    runs: int
    predicted_mean: dict[str, float]
    simulated_mean: dict[str, float]
    standard_error: dict[str, float]
    within_3se: dict[str, bool]
    bound_violations: int
    cma: dict[str, list[float]]


def compare_with_simulation(
    aug: AugmentedTopology,
    g: RGraph,
    routes: RoutingFunction,
    probs: RouteProbabilities,
    *,
    runs: int,
    seed: int = 0,
    sp_mode: bool = False,
    threads: int = 1,
) -> SimulationComparison:
    """Run many seeded propagations and compare catchment statistics.

    Checks that every simulated catchment stays inside the certain bounds
    and that mean sizes land within three standard errors of the expected
    sizes; also returns the cumulative moving average per ingress so
    convergence can be inspected.
    """
    if runs < 1:
        raise InputError(f"need at least one run, got {runs}")
    universe = g.report_nodes
    ingress_points = tuple(sorted(set(g.ingress_map.values())))
    routes_view = {n: routes[n] for n in universe}
    bounds = catchment_bounds(routes_view, ingress_points, len(universe))
    predicted = {
        m: sum(probs.get(n, {}).get(m, 0.0) for n in universe)
        for m in ingress_points
    }

    base_rng = random.Random(seed)
    run_seeds = [base_rng.randrange(2**63) for _ in range(runs)]

    def one_run(run_seed: int) -> dict[str, int]:
        result = run_bgp(aug, run_seed, sp_mode=sp_mode)
        catchment = simulated_catchment(result, aug)
        counts = {m: 0 for m in ingress_points}
        for node in universe:
            ingress = catchment.get(node)
            if ingress is not None:
                counts[ingress] += 1
        return counts

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            all_counts = list(pool.map(one_run, run_seeds))
    else:
        all_counts = [one_run(s) for s in run_seeds]

    violations = 0
    for counts in all_counts:
        if any(
            not bounds[m][0] <= counts[m] <= bounds[m][1] for m in ingress_points
        ):
            violations += 1

    simulated_mean = {}
    standard_error = {}
    within = {}
    cma: dict[str, list[float]] = {}
    for m in ingress_points:
        series = [c[m] for c in all_counts]
        mean = sum(series) / runs
        simulated_mean[m] = mean
        se = statistics.stdev(series) / runs**0.5 if runs > 1 else 0.0
        standard_error[m] = se
        within[m] = abs(mean - predicted[m]) <= 3 * se if runs > 1 else True
        trace, acc = [], 0.0
        for idx, value in enumerate(series, start=1):
            acc += value
            trace.append(acc / idx)
        cma[m] = trace

    return SimulationComparison(
        runs=runs,
        predicted_mean=predicted,
        simulated_mean=simulated_mean,
        standard_error=standard_error,
        within_3se=within,
        bound_violations=violations,
        cma=cma,
    )
