# Modèles de données

