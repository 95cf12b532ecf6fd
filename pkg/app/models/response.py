"""
Standardized JSON envelope for CLI output.
Every command prints a document following this structure on stdout.
"""

from typing import Any, Generic, Optional, TypeVar

from pydantic import BaseModel, ConfigDict, Field

from app import __version__
from app.config import settings

T = TypeVar('T')


class ResponseMeta(BaseModel):
    """Provenance metadata"""
    service: str = Field(default_factory=lambda: settings.service_name)
    version: str = __version__
    command: str = ""
    exit_code: int = 0


class StandardResponse(BaseModel, Generic[T]):
    """
    Standardized response format for all CLI commands.

    Example:
        {
            "success": true,
            "data": {...},
            "error": null,
            "message": "Property sweep passed",
            "meta": {"service": "lowswitch-lsvi", "version": "1.0.0", "command": "lemmas", "exit_code": 0}
        }
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    success: bool
    data: Optional[T] = None
    error: Optional[str] = None
    message: str
    meta: ResponseMeta = Field(default_factory=ResponseMeta)


def success_response(
    data: Any,
    message: str = "Success",
    meta: Optional[ResponseMeta] = None
) -> StandardResponse:
    """Create a successful response"""
    return StandardResponse(
        success=True,
        data=data,
        error=None,
        message=message,
        meta=meta or ResponseMeta()
    )


def error_response(
    error: str,
    message: str = "An error occurred",
    data: Any = None,
    meta: Optional[ResponseMeta] = None
) -> StandardResponse:
    """Create an error response"""
    return StandardResponse(
        success=False,
        data=data,
        error=error,
        message=message,
        meta=meta or ResponseMeta()
    )
