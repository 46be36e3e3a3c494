import sys

from spin_echo.cli import main

sys.exit(main())
