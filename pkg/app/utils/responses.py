import enum
import json
from typing import Any, Optional

import pandas as pd
from fastapi import status
from fastapi.responses import JSONResponse
from pydantic import BaseModel


class APIResponse:
    """Standardized API response envelope"""

    @staticmethod
    def success(
        data: Any = None,
        message: str = "Success",
        status_code: int = status.HTTP_200_OK
    ) -> JSONResponse:
        """Return a successful response"""
        return JSONResponse(
            status_code=status_code,
            content={
                "success": True,
                "message": message,
                "data": data
            }
        )

    @staticmethod
    def error(
        message: str = "An error occurred",
        error_code: Optional[str] = None,
        status_code: int = status.HTTP_400_BAD_REQUEST,
        details: Any = None
    ) -> JSONResponse:
        """Return an error response"""
        content = {
            "success": False,
            "message": message,
            "error_code": error_code
        }

        if details:
            content["details"] = details

        return JSONResponse(
            status_code=status_code,
            content=content
        )


class OutputFormat(str, enum.Enum):
    """Report output formats"""
    HUMAN = "human-table"
    DELIMITED = "delimited"
    RECORD = "structured-record"


class ReportRenderer:
    """
    Renders summaries and tables for the command line.
    Human and delimited output go through pandas; records are JSON.
    """

    @staticmethod
    def record(payload: Any) -> str:
        if isinstance(payload, BaseModel):
            payload = payload.model_dump(mode="json")
        return json.dumps(payload, sort_keys=True, indent=2)

    @staticmethod
    def frame(df: pd.DataFrame, fmt: OutputFormat, title: Optional[str] = None, payload: Any = None) -> str:
        if fmt == OutputFormat.RECORD:
            body = payload if payload is not None else df.to_dict(orient="records")
            return ReportRenderer.record(body)
        if fmt == OutputFormat.DELIMITED:
            return df.to_csv(index=False, float_format="%.6g").rstrip("\n")
        text = df.to_string(index=False, float_format=lambda v: f"{v:.6g}")
        return f"{title}\n{text}" if title else text

    @staticmethod
    def summary(fields: dict, fmt: OutputFormat, title: Optional[str] = None, payload: Any = None) -> str:
        """Render a flat key/value summary"""
        df = pd.DataFrame({"field": list(fields.keys()), "value": [str(v) for v in fields.values()]})
        if fmt == OutputFormat.RECORD:
            return ReportRenderer.record(payload if payload is not None else fields)
        if fmt == OutputFormat.DELIMITED:
            return pd.DataFrame([fields]).to_csv(index=False, float_format="%.6g").rstrip("\n")
        return ReportRenderer.frame(df, fmt, title=title)
