"""Módulo de interfaces: linha de comando e gráficos"""