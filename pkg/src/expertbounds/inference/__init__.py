from expertbounds.inference.system import ExpertSystem, QueryOutcome, SystemSignals

__all__ = ["ExpertSystem", "QueryOutcome", "SystemSignals"]
