import sys

from fcam.cli.main import main

sys.exit(main())
