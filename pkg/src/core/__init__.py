"""Módulo core do TIB Sim"""