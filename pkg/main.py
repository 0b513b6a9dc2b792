#!/usr/bin/env python3
"""
coopfusion - Main Entry Point

Convenience launcher for running the benchmark from a source checkout.

Usage:
    python main.py run configs/default.json      # Full experiment grid
    python main.py run configs/quick.json        # Small smoke grid
    python main.py gen configs/scene.json out/   # Write a dataset
    python main.py --help                        # Show help
"""

import sys
from pathlib import Path

# Add the project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))


def main():
    """Main entry point for the coopfusion command line."""
    print("=" * 60, file=sys.stderr)
    print("coopfusion - late collaborative 3D object fusion", file=sys.stderr)
    print(f"Project Root: {project_root}", file=sys.stderr)
    print(f"Python: {sys.version.split()[0]}", file=sys.stderr)
    print("=" * 60, file=sys.stderr)

    try:
        from coopfusion.app import main as app_main
        return app_main()

    except ImportError as e:
        print(f"Import Error: {e}", file=sys.stderr)
        print("Install dependencies: pip install -r requirements.txt", file=sys.stderr)
        return 1

    except KeyboardInterrupt:
        print("\nInterrupted by user", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
