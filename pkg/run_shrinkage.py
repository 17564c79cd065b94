#!/usr/bin/env python3
"""
Shrinkage Startup Script
Run an experiment from the command line, or start the API server with `serve`
"""

import subprocess
import sys


def check_dependencies():
    """Check if required dependencies are installed"""
    try:
        import numpy
        import scipy
        import pandas
        import pydantic
        import pydantic_settings
        print("✅ All dependencies are installed")
        return True
    except ImportError as e:
        print(f"❌ Missing dependency: {e}")
        print("Please run: pip install -r requirements.txt")
        return False


def start_api_server():
    """Start the FastAPI server in the foreground"""
    print("🚀 Starting API server...")
    try:
        subprocess.run([sys.executable, "-m", "src.api.main"], check=True)
        return 0
    except subprocess.CalledProcessError as e:
        print(f"❌ API server exited with {e.returncode}")
        return e.returncode
    except KeyboardInterrupt:
        print("\n👋 API server stopped")
        return 0


def main():
    """Main startup function"""
    if not check_dependencies():
        sys.exit(1)

    args = sys.argv[1:]
    if args and args[0] == "serve":
        sys.exit(start_api_server())

    from src.cli import main as cli_main

    code = cli_main(args)
    if code == 0:
        print("🎉 Done")
    sys.exit(code)


if __name__ == "__main__":
    main()
