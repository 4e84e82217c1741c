from typing import Dict, List


class ErrorValidator:
    """
    Builds standardized error payloads and collects non-fatal warnings
    raised while running a command.
    """

    def __init__(self) -> None:
        self._collected_warnings: List[str] = []

    # ---------------------------------
    # Error Handling
    # ---------------------------------

    def error(self, message: str) -> Dict[str, str]:
        """
        Returns a standardized error response dictionary.
        """
        return {
            "status": "error",
            "message": message
        }

    # ---------------------------------
    # Warning Handling
    # ---------------------------------

    def warn(self, message: str) -> None:
        self._collected_warnings.append(message)

    def check_cells(self, cells: Dict[str, int]) -> None:
        """
        Collects a warning for every empty cell.

        Args:
            cells: Dictionary of cell name to example count
        """
        for cell, count in cells.items():
            if count == 0:
                self._collected_warnings.append(
                    f"Cell '{cell}' has no examples and is reported as n/a."
                )

    def get_warnings(self) -> List[str]:
        """
        Returns collected warnings.
        """
        return self._collected_warnings
