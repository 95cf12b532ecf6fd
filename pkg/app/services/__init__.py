"""
Core services: covariance engine, MDP oracle, agent and metrics harness
"""
