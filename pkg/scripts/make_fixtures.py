#!/usr/bin/env python3
"""Regenerate the committed fixture files and their manifest.

Run from the repository root after changing anything in qbrn.fixtures:

    python scripts/make_fixtures.py
"""

from qbrn.fixtures import FIXTURE_DIR, write_fixtures


def main():
    paths = write_fixtures()
    for p in paths:
        print(f"wrote {p}")
    print(f"wrote {FIXTURE_DIR / 'MANIFEST.sha256'}")


if __name__ == "__main__":
    main()
