# Services de calcul
