import sys

from securestate.main import main

sys.exit(main())
