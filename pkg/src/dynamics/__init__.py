"""Módulo de dinâmica: integração da cavidade e cadeia de leitura"""