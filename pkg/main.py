import sys
from typing import List, Optional

from app.services.experiments.route import dispatch


def main(argv: Optional[List[str]] = None) -> int:
    return dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
