import sys

from markerstack.cli import main

sys.exit(main())
