import sys

from assertrunner import main

if __name__ == "__main__":
    sys.exit(main())
