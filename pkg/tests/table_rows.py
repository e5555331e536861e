"""Published (S, Gamma) rows with their printed CR triples and latent dims.

Each row: (C, H, S, CR, CR_spec, CR_spat, Sigma, Omega, Gamma), values as printed.
"""

ROWS_202 = [
    (202, 128, 0, 3.9608, 3.9608, 1.0, 128, 128, 51),
    (202, 128, 1, 3.9608, 0.9902, 4.0, 64, 64, 204),
    (202, 128, 2, 3.9656, 0.24785, 16.0, 32, 32, 815),
    (202, 128, 3, 3.9669, 0.061982812, 64.0, 16, 16, 3259),
    (202, 128, 0, 7.7692, 7.692, 1.0, 128, 128, 26),
    (202, 128, 1, 7.7692, 1.9423, 4.0, 64, 64, 104),
    (202, 128, 2, 7.7692, 0.485575, 16.0, 32, 32, 416),
    (202, 128, 3, 7.7692, 0.121, 64.0, 16, 16, 1664),
    (202, 128, 0, 15.538, 15.538, 1.0, 128, 128, 13),
    (202, 128, 1, 15.538, 3.8845, 4.0, 64, 64, 52),
    (202, 128, 2, 15.538, 0.971125, 16.0, 32, 32, 208),
    (202, 128, 3, 15.538, 0.24278125, 64.0, 16, 16, 832),
    (202, 128, 0, 28.857, 28.857, 1.0, 128, 128, 7),
    (202, 128, 1, 28.857, 7.21425, 4.0, 64, 64, 28),
    (202, 128, 2, 28.857, 1.8035625, 16.0, 32, 32, 112),
    (202, 128, 3, 28.857, 0.450890625, 64.0, 16, 16, 448),
    (202, 128, 0, 50.50, 50.50, 1.0, 128, 128, 4),
    (202, 128, 1, 50.50, 12.625, 4.0, 64, 64, 16),
    (202, 128, 2, 50.50, 3.15625, 16.0, 32, 32, 64),
    (202, 128, 3, 50.50, 0.7890625, 64.0, 16, 16, 256),
    (202, 128, 0, 101.00, 101.00, 1.0, 128, 128, 2),
    (202, 128, 1, 101.00, 25.25, 4.0, 64, 64, 8),
    (202, 128, 2, 101.00, 6.3125, 16.0, 32, 32, 32),
    (202, 128, 3, 101.00, 1.578125, 64.0, 16, 16, 128),
    (202, 128, 0, 202.00, 202.00, 1.0, 128, 128, 1),
    (202, 128, 1, 202.00, 50.5, 4.0, 64, 64, 4),
    (202, 128, 2, 202.00, 12.625, 16.0, 32, 32, 16),
    (202, 128, 3, 202.00, 3.15625, 64.0, 16, 16, 64),
    (202, 128, 1, 404.00, 101.0, 4.0, 64, 64, 2),
    (202, 128, 2, 404.00, 25.25, 16.0, 32, 32, 8),
    (202, 128, 3, 404.00, 6.3125, 64.0, 16, 16, 32),
    (202, 128, 1, 808.00, 202, 4.0, 64, 64, 1),
    (202, 128, 2, 808.00, 50.5, 16.0, 32, 32, 4),
    (202, 128, 3, 808.00, 12.625, 64.0, 16, 16, 16),
]

ROWS_369 = [
    (369, 96, 0, 4.0109, 4.0109, 1.0, 96, 96, 92),
    (369, 96, 1, 3.9784, 0.9946, 4.0, 48, 48, 371),
    (369, 96, 2, 3.9704, 0.24815, 16.0, 24, 24, 1487),
    (369, 96, 3, 3.9704, 0.0620375, 64.0, 12, 12, 5951),
    (369, 96, 0, 7.8511, 7.8511, 1.0, 96, 96, 47),
    (369, 96, 1, 7.8095, 1.952375, 4.0, 48, 48, 189),
    (369, 96, 2, 7.7787, 0.48616875, 16.0, 24, 24, 759),
    (369, 96, 3, 7.7710, 0.121421875, 64.0, 12, 12, 3039),
    (369, 96, 0, 16.043, 16.043, 1.0, 96, 96, 23),
    (369, 96, 1, 15.702, 3.9255, 4.0, 48, 48, 94),
    (369, 96, 2, 15.578, 0.973625, 16.0, 24, 24, 379),
    (369, 96, 3, 15.547, 0.242921875, 64.0, 12, 12, 1519),
    (369, 96, 0, 30.75, 30.75, 1.0, 96, 96, 12),
    (369, 96, 1, 28.941, 7.23525, 4.0, 48, 48, 51),
    (369, 96, 2, 28.941, 1.8088125, 16.0, 24, 24, 204),
    (369, 96, 3, 28.870, 0.45109375, 64.0, 12, 12, 818),
    (369, 96, 0, 61.5, 61.5, 1.0, 96, 96, 6),
    (369, 96, 1, 61.5, 15.375, 4.0, 48, 48, 24),
    (369, 96, 2, 61.5, 3.84375, 16.0, 24, 24, 96),
    (369, 96, 3, 61.5, 0.9609375, 64.0, 12, 12, 384),
    (369, 96, 0, 123.0, 123.0, 1.0, 96, 96, 3),
    (369, 96, 1, 123.0, 30.75, 4.0, 48, 48, 12),
    (369, 96, 2, 123.0, 7.6875, 16.0, 24, 24, 48),
    (369, 96, 3, 123.0, 1.921875, 64.0, 12, 12, 192),
    (369, 96, 0, 184.5, 184.5, 1.0, 96, 96, 2),
    (369, 96, 1, 184.5, 46.125, 4.0, 48, 48, 8),
    (369, 96, 2, 184.5, 11.53125, 16.0, 24, 24, 32),
    (369, 96, 3, 184.5, 2.8828125, 64.0, 12, 12, 128),
    (369, 96, 0, 369.0, 369.0, 1.0, 96, 96, 1),
    (369, 96, 1, 369.0, 92.25, 4.0, 48, 48, 4),
    (369, 96, 2, 369.0, 23.0625, 16.0, 24, 24, 16),
    (369, 96, 3, 369.0, 5.765625, 64.0, 12, 12, 64),
    (369, 96, 1, 738.0, 184.5, 4.0, 48, 48, 2),
    (369, 96, 2, 738.0, 46.125, 16.0, 24, 24, 8),
    (369, 96, 3, 738.0, 11.53125, 64.0, 12, 12, 32),
    (369, 96, 1, 1476.0, 369.0, 4.0, 48, 48, 1),
    (369, 96, 2, 1476.0, 92.25, 16.0, 24, 24, 4),
    (369, 96, 3, 1476.0, 23.0625, 64.0, 12, 12, 16),
]

