"""Wide-network studies: kernel variance, initialization error, parameter drift and the limit dynamics."""

import logging
from pathlib import Path

import numpy as np

from hjb_actor_critic.cli import BaseCommand, CommandError, parse_float_list, parse_int_list
from hjb_actor_critic.commands import load_train_config, output_dir, recorded_options
from hjb_actor_critic.config import LimitOdeConfig
from hjb_actor_critic.errors import UnknownStudyError
from hjb_actor_critic.manifest import RunManifest
from hjb_actor_critic.metrics_mc import NOT_AVAILABLE
from hjb_actor_critic.ntk_limit import (
    init_error_study,
    limit_ode_integrate,
    ntk_variance_study,
    parameter_drift_study,
    width_consistency_study,
)
from hjb_actor_critic.problems import preset
from hjb_actor_critic.util import load_config_file, write_csv_table

logger = logging.getLogger(__name__)

STUDIES = {
    "ntk-variance": "ntk_variance",
    "init-error": "init_error",
    "param-drift": "param_drift",
    "limit-ode": "limit_ode",
    "width-consistency": "width_consistency",
}

# Problem used when --problem is not given.
DEFAULT_PROBLEMS = {
    "init-error": ("problem1", 2),
    "param-drift": ("problem1", 2),
    "limit-ode": ("toy1d", None),
    "width-consistency": ("toy1d", None),
}


def _coordinates(values) -> str:
    return " ".join(format(float(value), ".10g") for value in np.atleast_1d(values))


class Command(BaseCommand):
    """Run one of the studies of the wide-network limit and write <study>.csv."""

    help = f"Run a wide-network study: {', '.join(STUDIES)}."

    def add_arguments(self, parser):
        """Study name plus the options the studies share."""
        parser.add_argument("study", nargs="?", help=f"One of {', '.join(STUDIES)}.")
        parser.add_argument("--problem", default=None, help="Preset problem name.")
        parser.add_argument("--dim", type=int, default=None, help="State dimension (input dimension for ntk-variance).")
        parser.add_argument("--config", default=None, help="TrainConfig file (param-drift) or limit ODE settings file.")
        parser.add_argument("--out", default=None, help="Output directory (default: runs/study).")
        parser.add_argument("--widths", type=parse_int_list, default=None, help="Comma separated widths.")
        parser.add_argument("--seeds", type=parse_int_list, default=None, help="Comma separated network seeds.")
        parser.add_argument("--beta", type=float, default=None, help="Output scaling exponent.")
        parser.add_argument("--reinits", type=int, default=200, help="Re-initializations per width (ntk-variance).")
        parser.add_argument("--x", type=parse_float_list, default=None, help="First kernel point (ntk-variance).")
        parser.add_argument("--y", type=parse_float_list, default=None, help="Second kernel point (ntk-variance).")
        parser.add_argument("--samples", type=int, default=4096, help="Quadrature points (init-error).")
        parser.add_argument("--cycles", type=int, default=None, help="Training cycles (param-drift).")
        parser.add_argument("--T", dest="horizon", type=float, default=None, help="Horizon of the limit ODE.")
        parser.add_argument("--dt", type=float, default=None, help="Time step of the limit ODE.")
        parser.add_argument("--grid-points", type=int, default=None, help="Grid points per axis of the limit ODE.")
        parser.add_argument("--kernel-samples", type=int, default=None, help="Monte Carlo samples for the kernels.")
        parser.add_argument("--cache-dir", default=None, help="Directory caching kernel matrices.")
        parser.add_argument("--times", type=parse_float_list, default=None, help="Times compared (width-consistency).")

    def handle(self, *args, **options):
        """Handle the execution of the command."""
        name = options["study"]
        if not name:
            raise CommandError(f"a study name is required: {', '.join(STUDIES)}")
        if name not in STUDIES:
            raise UnknownStudyError(name, STUDIES)
        out = output_dir(options["out"], "runs/study")
        self.write(f"Running study {name}, output in {out}")
        config, summary = getattr(self, STUDIES[name])(out / f"{name}.csv", options)
        manifest = RunManifest("study", recorded_options(options), config, options["seed"], str(out))
        manifest.finish(0, [f"{name}.csv", "manifest.json"], **summary)
        manifest.write()
        for key, value in summary.items():
            self.write(f"{key}: {value:.6g}" if isinstance(value, float) else f"{key}: {value}")
        return None

    def _problem(self, options):
        problem_name, dim = DEFAULT_PROBLEMS[options["study"]]
        if options["problem"]:
            problem_name, dim = options["problem"], options["dim"]
        elif options["dim"] is not None:
            dim = options["dim"]
        return preset(problem_name, dim)

    def _limit_config(self, options) -> LimitOdeConfig:
        return LimitOdeConfig.from_mapping(
            load_config_file(options["config"]) if options["config"] else {},
            horizon=options["horizon"],
            dt=options["dt"],
            grid_points=options["grid_points"],
            kernel_samples=options["kernel_samples"],
            cache_dir=options["cache_dir"],
            seed=options["seed"],
        )

    def ntk_variance(self, path: Path, options):
        """Empirical NTK variance across re-initializations, per width."""
        seed = options["seed"] or 0
        dim = options["dim"] or 2
        rng = np.random.default_rng(seed)
        x = np.asarray(options["x"]) if options["x"] else rng.uniform(-1.0, 1.0, dim)
        y = np.asarray(options["y"]) if options["y"] else rng.uniform(-1.0, 1.0, dim)
        if x.size != y.size:
            raise CommandError("--x and --y must have the same dimension")
        beta = options["beta"] if options["beta"] is not None else 0.75
        study = ntk_variance_study(x, y, options["widths"] or [64, 256, 1024], options["reinits"], beta, seed)
        write_csv_table(
            path,
            ["width", "mean", "variance", "slope"],
            [(width, mean, variance, study.slope) for width, mean, variance in study.rows],
        )
        config = {"x": x.tolist(), "y": y.tolist(), "beta": beta, "reinits": options["reinits"], "seed": seed}
        return config, {"slope": study.slope}

    def init_error(self, path: Path, options):
        """Distance of freshly initialized networks from the limit initial state."""
        problem = self._problem(options)
        beta = options["beta"] if options["beta"] is not None else 0.75
        study = init_error_study(
            problem, options["widths"] or [64, 256, 1024], options["seeds"] or [0, 1, 2], beta, options["samples"]
        )
        write_csv_table(
            path,
            ["width", "seed", "l2_critic", "l2_actor", "slope", "expected_slope"],
            [(*row, study.slope, study.expected) for row in study.rows],
        )
        config = {"problem": problem.name, "dim": problem.dim, "beta": beta, "samples": options["samples"]}
        return config, {"slope": study.slope, "expected_slope": study.expected}

    def param_drift(self, path: Path, options):
        """Largest parameter movement during training, per width."""
        problem = self._problem(options)
        cfg = load_train_config(
            options["config"],
            options["seed"],
            total_cycles=options["cycles"],
            beta=options["beta"],
        )
        study = parameter_drift_study(problem, options["widths"] or [64, 256, 1024], options["seeds"] or [0], cfg)
        write_csv_table(
            path,
            ["width", "seed", "cycle", "network", "outer", "inner", "bias", "max_drift"],
            [(width, seed, *row, max(row.outer, row.inner, row.bias)) for width, seed, row in study.history],
        )
        config = {"problem": problem.name, "dim": problem.dim, **cfg.to_dict()}
        return config, {"slope": study.slope, "bound": study.bound}

    def limit_ode(self, path: Path, options):
        """Integrate the limit dynamics and write the recorded grid states."""
        problem = self._problem(options)
        cfg = self._limit_config(options)
        result = limit_ode_integrate(problem, cfg)
        V = problem.value_function.value(result.grid) if problem.value_function is not None else None
        u_star = problem.optimal_control(result.grid) if problem.optimal_control is not None else None
        rows = []
        for state in result.states:
            for index, point in enumerate(result.grid):
                rows.append(
                    (
                        state.t,
                        _coordinates(point),
                        float(state.Q[index]),
                        _coordinates(state.U[index]),
                        float(V[index]) if V is not None else NOT_AVAILABLE,
                        _coordinates(u_star[index]) if u_star is not None else NOT_AVAILABLE,
                    )
                )
        write_csv_table(path, ["t", "x", "Q", "U", "V", "u_star"], rows)
        summary = {
            "residual_critic": result.residual_critic,
            "residual_actor": result.residual_actor,
            "l2_critic": result.l2_critic,
            "l2_actor": result.l2_actor,
        }
        return {"problem": problem.name, **cfg.to_dict()}, summary

    def width_consistency(self, path: Path, options):
        """Distances of finite networks from the limit trajectory, per width."""
        problem = self._problem(options)
        cfg = self._limit_config(options)
        beta = options["beta"] if options["beta"] is not None else 0.75
        study = width_consistency_study(
            problem, options["widths"] or [64, 256, 1024], options["seeds"] or [0], cfg, beta, options["times"]
        )
        write_csv_table(path, ["width", "seed", "t", "l2_critic", "h2_critic", "l2_actor"], study.rows)
        return {"problem": problem.name, "beta": beta, **cfg.to_dict()}, {"inversions": study.inversions}
