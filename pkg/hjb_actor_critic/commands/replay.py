"""Run a recorded command again from its manifest."""

import logging

from hjb_actor_critic.cli import BaseCommand, CommandError, call_command
from hjb_actor_critic.manifest import RunManifest

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    """Re-execute the command recorded in a manifest.json, writing to a new directory."""

    help = "Replay the command recorded in a run manifest."

    def add_arguments(self, parser):
        """The manifest and where the replayed outputs go."""
        parser.add_argument("manifest", nargs="?", help="manifest.json or the directory holding it.")
        parser.add_argument("--out", default=None, help="Output directory of the replay (required).")

    def handle(self, *args, **options):
        """Handle the execution of the command."""
        if not options["manifest"] or not options["out"]:
            raise CommandError("a manifest and --out are required")
        manifest = RunManifest.load(options["manifest"])
        if manifest.command == "replay":
            raise CommandError("cannot replay a replay manifest")
        recorded = dict(manifest.options)
        recorded["out"] = options["out"]
        if options["threads"] is not None:
            recorded["threads"] = options["threads"]
        if options["seed"] is not None:
            recorded["seed"] = options["seed"]
        logger.info("Replaying %s from %s into %s", manifest.command, options["manifest"], options["out"])
        self.write(f"Replaying {manifest.command} into {options['out']}")
        return call_command(manifest.command, stdout=self.stdout, stderr=self.stderr, **recorded)
