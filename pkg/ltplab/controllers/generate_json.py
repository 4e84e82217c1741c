from typing import Any, Dict, List, Optional
import json


class JSONResponse:
    """
    Responsible for structuring a command's final summary in JSON format.
    """

    def __init__(self, command: str, payload: Optional[Dict[str, Any]],
                 warnings: Optional[List[str]] = None) -> None:
        self.command = command
        self.payload: Dict[str, Any] = payload or {}
        self.warnings: List[str] = warnings or []
        self.is_valid: bool = bool(self.payload)

        self.message: str = (
            f"Command '{command}' completed successfully."
            if self.is_valid
            else f"Command '{command}' produced no results."
        )

    def to_dict(self) -> Dict[str, Any]:
        """
        Returns the standardized response structure as a dictionary.
        """
        return {
            "status": "ok" if self.is_valid else "empty",
            "command": self.command,
            "message": self.message,
            "warnings": self.warnings,
            "result": self.payload,
        }

    def to_json(self) -> str:
        """
        Returns the response serialized as a JSON string.
        """
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=4, default=float)
