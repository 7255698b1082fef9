import sys
from pathlib import Path

# make tests/oracles importable as a plain package from any rootdir
sys.path.insert(0, str(Path(__file__).resolve().parent))
