'''
SIGAN: Shadow and Illumination harmonization GAN

Command line entry point `sigan` and its subcommands
(gen, stats, train, eval, infer).

License: MIT
'''
