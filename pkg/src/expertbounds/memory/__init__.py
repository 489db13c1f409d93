from expertbounds.memory.decision_log import DecisionLog, read_decision_log, write_decision_log

__all__ = ["DecisionLog", "read_decision_log", "write_decision_log"]
