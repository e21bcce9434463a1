import sys

from privpf.cli import main

sys.exit(main())
