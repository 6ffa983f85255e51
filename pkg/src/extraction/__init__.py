"""Módulo de extração: ajustes e calibração"""