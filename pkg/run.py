"""Run the fcam command-line interface."""
import sys

from fcam.cli.main import main

if __name__ == "__main__":
    sys.exit(main())
