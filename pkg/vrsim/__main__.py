import sys

from vrsim.main import main

sys.exit(main())
