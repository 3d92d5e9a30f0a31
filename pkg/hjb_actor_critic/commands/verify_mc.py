"""Verify trained networks against Monte Carlo values of the actor's policy."""

from hjb_actor_critic.cli import BaseCommand, CommandError
from hjb_actor_critic.commands import output_dir, recorded_options
from hjb_actor_critic.config import McConfig
from hjb_actor_critic.manifest import RunManifest
from hjb_actor_critic.metrics_mc import agreement_report, summary_line, write_agreement_csv, write_histogram_csv
from hjb_actor_critic.nn import load_checkpoint
from hjb_actor_critic.problems import preset
from hjb_actor_critic.reports import render_agreement_report
from hjb_actor_critic.util import load_config_file


class Command(BaseCommand):
    """Compare V, the critic and Monte Carlo estimates of the actor's cost."""

    help = "Monte Carlo verification of an actor/critic checkpoint pair."

    def add_arguments(self, parser):
        """Problem, checkpoints and Monte Carlo settings."""
        parser.add_argument("--problem", help="Preset problem name (see list-problems).")
        parser.add_argument("--dim", type=int, default=None, help="State dimension for lqr and problem1.")
        parser.add_argument("--actor-ckpt", help="Actor checkpoint written by train.")
        parser.add_argument("--critic-ckpt", help="Critic checkpoint written by train.")
        parser.add_argument("--config", default=None, help="YAML or JSON file of Monte Carlo settings.")
        parser.add_argument("--points", type=int, default=None, help="Number of random start points.")
        parser.add_argument("--paths", type=int, default=None, help="Sample paths per start point.")
        parser.add_argument("--dt", type=float, default=None, help="Euler-Maruyama time step.")
        parser.add_argument("--max-time", type=float, default=None, help="Time cap after which paths are censored.")
        parser.add_argument("--out", default=None, help="Output directory (default: runs/<problem>/verify).")

    def handle(self, *args, **options):
        """Handle the execution of the command."""
        for name in ("problem", "actor_ckpt", "critic_ckpt"):
            if not options[name]:
                raise CommandError(f"--{name.replace('_', '-')} is required")
        problem = preset(options["problem"], options["dim"])
        cfg = McConfig.from_mapping(
            load_config_file(options["config"]) if options["config"] else {},
            eval_points=options["points"],
            paths_per_point=options["paths"],
            dt=options["dt"],
            max_time=options["max_time"],
            seed=options["seed"],
        )
        actor = problem.from_checkpoint(load_checkpoint(options["actor_ckpt"]), "actor")
        critic = problem.from_checkpoint(load_checkpoint(options["critic_ckpt"]), "critic")
        out = output_dir(options["out"], f"runs/{problem.name}/verify")
        manifest = RunManifest("verify-mc", recorded_options(options), cfg.to_dict(), cfg.seed, str(out))

        report = agreement_report(problem, actor, critic, cfg, threads=self.threads)
        write_agreement_csv(out / "agreement.csv", report.rows)
        histogram_files = {}
        for name, bins in report.histograms.items():
            filename = f"histogram_{name}.csv"
            write_histogram_csv(out / filename, bins)
            histogram_files[name] = filename
        render_agreement_report(out / "agreement_report.md", problem, cfg, report, histogram_files)

        e1, e2, e3 = summary_line(report)
        outputs = ["agreement.csv", "agreement_report.md", "manifest.json", *histogram_files.values()]
        manifest.finish(0, outputs, e1=report.e1, e2=report.e2, e3=report.e3, bound_holds=report.bound_holds)
        manifest.write()
        self.write(f"E1 {e1}")
        self.write(f"E2 {e2}")
        self.write(f"E3 {e3}")
        if not report.bound_holds:
            self.write("Warning: E3 exceeds 2 (E1 + E2)")
        return None
