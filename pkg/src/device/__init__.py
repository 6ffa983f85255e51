"""Módulo do dispositivo: ponte de SQUIDs e cavidade"""