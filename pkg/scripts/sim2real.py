"""
Command-line entry point for the refinement system.

Usage examples:

    python scripts/sim2real.py make-toy data/toy
    python scripts/sim2real.py train -c configs/toy.cfg --output-dir runs/toy
    python scripts/sim2real.py select-ckpt runs/toy
    python scripts/sim2real.py refine runs/toy/ckpt_300.bin data/toy/synthetic data/toy/refined
    python scripts/sim2real.py eval-fid data/toy/refined data/toy/real
    python scripts/sim2real.py seg-matrix -c configs/toy.cfg --refined data/toy/refined --output-dir runs/seg
"""
import sys
from pathlib import Path

# Add parent directory to path to import src module
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.cli import main


if __name__ == '__main__':
    sys.exit(main())
