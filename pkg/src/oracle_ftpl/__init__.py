"""Oracle-efficient Follow-the-Perturbed-Leader for adversarial contextual learning."""
