"""Run the acceptance suite and write the JSON report.

    python3 scripts/run_acceptance.py [--config FILE] [--only 1,2] [--out report.json]

Exit status follows the CLI: nonzero if any criterion fails.
"""

import sys

from desclab.cli import main

if __name__ == "__main__":
    sys.exit(main(["report", *sys.argv[1:]]))
