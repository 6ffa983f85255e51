"""Módulo de espectroscopia: reflexão e estado estacionário de Duffing"""