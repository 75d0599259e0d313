import logging
from utility.utils import current_utc_time
from typing import Dict, Optional
import json

from app.middleware.logger.RunContextManager import RunContextManager

class ErrorLogger:
    def __init__(self):
        self.logger = logging.getLogger('fedcore.error')

    def log_error(self, error: Exception, run_id: str, additional_info: Optional[Dict] = None):
        log_entry = {
            'timestamp': current_utc_time().strftime('%Y-%m-%d %H:%M:%S.%f')[:-3],
            'run_id': run_id,
            'command': RunContextManager.get_command(),
            'round': RunContextManager.get_round(),
            'error_type': type(error).__name__,
            'error_message': str(error),
            'additional_info': additional_info or {}
        }
        self.logger.error(f"Error Occurred: {json.dumps(log_entry, default=str)}")
