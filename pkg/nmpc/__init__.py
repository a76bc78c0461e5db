"""Networked model predictive control laboratory"""
