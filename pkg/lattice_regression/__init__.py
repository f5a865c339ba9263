# lattice_regression：在 ℓ_p^n 與離散化 L_p 空間上的線上平方損失回歸 (AAR / KAAR / BLAAR)
__version__ = "1.0.0"
