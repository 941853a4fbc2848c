"""
Desktop run monitor entry point.

    python3 -m app.main
"""

import sys

from PyQt6.QtWidgets import QApplication

from .cli import configure_logging
from .window import DegaaWindow


def main():
    configure_logging()
    app = QApplication(sys.argv)
    app.setApplicationName("DEGAA Run Monitor")
    app.setApplicationDisplayName("DEGAA Run Monitor")

    window = DegaaWindow()
    window.show()

    sys.exit(app.exec())


if __name__ == "__main__":
    main()
