import sys
from pathlib import Path

# Add src directory to path for imports when the package is not installed
sys.path.insert(0, str(Path(__file__).parent / "src"))
