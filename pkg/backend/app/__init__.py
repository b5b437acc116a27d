"""
Simulador de sincronização do gêmeo digital de rede (API, CLI e serviços)
"""
