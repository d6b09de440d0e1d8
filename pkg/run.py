#!/usr/bin/env python3
"""
Serve the detection API with uvicorn.
The command-line tools live in `python -m app.cli`.
"""

import uvicorn
from app.core.config import settings

if __name__ == "__main__":
    uvicorn.run(
        "app.main:app",
        host=settings.api_host,
        port=settings.api_port,
        reload=settings.debug,
        log_level=settings.log_level.lower() if not settings.debug else "debug"
    )
