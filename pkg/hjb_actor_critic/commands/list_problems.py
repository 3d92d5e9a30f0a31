"""List the preset problems."""

from hjb_actor_critic.cli import BaseCommand
from hjb_actor_critic.problems import catalog


class Command(BaseCommand):
    """Print every preset problem name with its description."""

    help = "List the preset problems that --problem accepts."

    def handle(self, *args, **options):
        """Handle the execution of the command."""
        entries = catalog()
        width = max(len(name) for name in entries)
        for name, description in entries.items():
            self.write(f"{name.ljust(width)}  {description}")
