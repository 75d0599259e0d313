import contextvars
from typing import Optional

class RunContextManager:
    _run_id_var = contextvars.ContextVar('run_id', default='')
    _round_var = contextvars.ContextVar('round', default=None)
    _command_var = contextvars.ContextVar('command', default='')

    @staticmethod
    def set_run_id(run_id: str):
        RunContextManager._run_id_var.set(run_id)

    @staticmethod
    def get_run_id() -> str:
        return RunContextManager._run_id_var.get()

    @staticmethod
    def set_round(round_index: Optional[int]):
        RunContextManager._round_var.set(round_index)

    @staticmethod
    def get_round() -> Optional[int]:
        return RunContextManager._round_var.get()

    @staticmethod
    def set_command(command: str):
        RunContextManager._command_var.set(command)

    @staticmethod
    def get_command() -> str:
        return RunContextManager._command_var.get()

    @staticmethod
    def clear_run_context():
        RunContextManager._run_id_var.set('')
        RunContextManager._round_var.set(None)
        RunContextManager._command_var.set('')
