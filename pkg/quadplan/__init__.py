"""Zweistufige Online-Trajektorienplanung für Quadrokopter."""

from .main import create_parser, main

__all__ = ["create_parser", "main"]
