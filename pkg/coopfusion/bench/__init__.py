"""
Benchmark orchestration: experiment configuration, the method registry
and grid runner, and result table writers.
"""
