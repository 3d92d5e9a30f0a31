"""Train an actor and a critic on a preset problem."""

import logging

from hjb_actor_critic.choices import OptimizerChoices, SchedulerChoices, TruncationModeChoices
from hjb_actor_critic.cli import BaseCommand, CommandError
from hjb_actor_critic.commands import load_train_config, output_dir, recorded_options, write_json
from hjb_actor_critic.errors import DivergenceError
from hjb_actor_critic.manifest import RunManifest
from hjb_actor_critic.nn import save_checkpoint
from hjb_actor_critic.problems import preset
from hjb_actor_critic.reports import render_training_report
from hjb_actor_critic.trainer import CsvMetricsSink, final_window_mean, train

logger = logging.getLogger(__name__)

FINAL_METRICS = ("critic_loss", "actor_loss", "mse_c", "re_c", "mse_a", "re_a")

# Command line option -> TrainConfig field.
OVERRIDES = {
    "width": "width",
    "critic_width": "critic_width",
    "beta": "beta",
    "cycles": "total_cycles",
    "critic_steps": "critic_steps_per_cycle",
    "actor_steps": "actor_steps_per_cycle",
    "batch_critic": "m_critic",
    "batch_actor": "m_actor",
    "lr_actor": "base_lr_actor",
    "lr_critic": "base_lr_critic",
    "optimizer": "optimizer",
    "scheduler": "scheduler",
    "loss_floor": "loss_floor",
    "truncation": "truncation",
    "truncation_delta": "truncation_delta",
    "eval_points": "eval_points",
    "eval_every": "eval_every",
    "ntk_rate_factor": "include_ntk_rate_factor",
}


class Command(BaseCommand):
    """Run the actor-critic algorithm and write metrics, checkpoints and a report."""

    help = "Train an actor-critic pair on a preset problem."

    def add_arguments(self, parser):
        """Problem selection, config file, output directory and TrainConfig overrides."""
        parser.add_argument("--problem", help="Preset problem name (see list-problems).")
        parser.add_argument("--dim", type=int, default=None, help="State dimension for lqr and problem1.")
        parser.add_argument("--config", default=None, help="YAML or JSON file of TrainConfig fields, - for stdin.")
        parser.add_argument("--out", default=None, help="Output directory (default: runs/<problem>).")
        parser.add_argument("--width", type=int, default=None, help="Actor hidden width N.")
        parser.add_argument("--critic-width", type=int, default=None, help="Critic hidden width.")
        parser.add_argument("--beta", type=float, default=None, help="Output scaling exponent in (1/2, 1).")
        parser.add_argument("--cycles", type=int, default=None, help="Number of critic/actor cycles.")
        parser.add_argument("--critic-steps", type=int, default=None, help="Critic updates per cycle.")
        parser.add_argument("--actor-steps", type=int, default=None, help="Actor updates per cycle.")
        parser.add_argument("--batch-critic", type=int, default=None, help="Critic batch size.")
        parser.add_argument("--batch-actor", type=int, default=None, help="Actor batch size.")
        parser.add_argument("--lr-actor", type=float, default=None, help="Base actor learning rate.")
        parser.add_argument("--lr-critic", type=float, default=None, help="Base critic learning rate.")
        parser.add_argument("--optimizer", choices=OptimizerChoices.values(), default=None)
        parser.add_argument("--scheduler", choices=SchedulerChoices.values(), default=None)
        parser.add_argument("--loss-floor", type=float, default=None, help="Floor of the modified actor loss.")
        parser.add_argument("--truncation", choices=TruncationModeChoices.values(), default=None)
        parser.add_argument("--truncation-delta", type=float, default=None, help="Truncation exponent delta.")
        parser.add_argument("--eval-points", type=int, default=None, help="Points used for MSE/RE evaluation.")
        parser.add_argument("--eval-every", type=int, default=None, help="Cycles between evaluations.")
        parser.add_argument(
            "--ntk-rate-factor",
            action="store_true",
            default=None,
            help="Multiply gradients by N^(2 beta - 1) before the optimizer.",
        )

    def handle(self, *args, **options):
        """Handle the execution of the command."""
        if not options["problem"]:
            raise CommandError("--problem is required")
        problem = preset(options["problem"], options["dim"])
        cfg = load_train_config(
            options["config"], options["seed"], **{field: options[name] for name, field in OVERRIDES.items()}
        )
        out = output_dir(options["out"], f"runs/{problem.name}")
        manifest = RunManifest("train", recorded_options(options), cfg.to_dict(), cfg.seed, str(out))
        write_json(out / "config.json", {"problem": problem.name, "dim": problem.dim, **cfg.to_dict()})
        self.write(f"Training on {problem.name} (d={problem.dim}) for {cfg.total_cycles} cycles, output in {out}")

        outputs = ["config.json", "metrics.csv", "actor.json", "critic.json", "training_report.md", "manifest.json"]
        sink = CsvMetricsSink(out / "metrics.csv")
        try:
            result = train(problem, cfg, sink, threads=self.threads)
        except DivergenceError as ex:
            save_checkpoint(out / "actor.json", ex.actor, problem.name)
            save_checkpoint(out / "critic.json", ex.critic, problem.name)
            render_training_report(out / "training_report.md", problem, cfg, None, {}, diverged=str(ex))
            manifest.finish(2, outputs, diverged_cycle=ex.cycle, diverged_step=ex.step, diverged_phase=str(ex.phase))
            manifest.write()
            self.write(f"Wrote the networks of the last completed cycle to {out}")
            raise
        finally:
            sink.close()

        save_checkpoint(out / "actor.json", result.actor, problem.name)
        save_checkpoint(out / "critic.json", result.critic, problem.name)
        final = {name: final_window_mean(result.records, name) for name in FINAL_METRICS}
        render_training_report(out / "training_report.md", problem, cfg, result, final)
        manifest.finish(0, outputs, **final)
        manifest.write()
        for name in FINAL_METRICS:
            self.write(f"{name}: {final[name]:.6g}")
        return None
