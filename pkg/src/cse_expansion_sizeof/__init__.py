def register(sizeof):
    @sizeof.register_lazy("cse_expansion")
    def lazy_register_cse_expansion():
        import dask

        from cse_expansion.fci import Spectrum
        from cse_expansion.fockspace import StateVector
        from cse_expansion.integrals import IntegralSet
        from cse_expansion.scf import SpinOrbitalHamiltonian

        @sizeof.register(IntegralSet)
        def register_cse_expansion_IntegralSet(data):
            return sum(
                dask.sizeof.sizeof(a)
                for a in (data.overlap, data.kinetic, data.nuclear, data.eri)
            )

        @sizeof.register(SpinOrbitalHamiltonian)
        def register_cse_expansion_SpinOrbitalHamiltonian(data):
            return dask.sizeof.sizeof(data.h) + dask.sizeof.sizeof(data.g)

        @sizeof.register(StateVector)
        def register_cse_expansion_StateVector(data):
            return dask.sizeof.sizeof(data.coefficients)

        @sizeof.register(Spectrum)
        def register_cse_expansion_Spectrum(data):
            return dask.sizeof.sizeof(data.eigenvalues) + sum(
                dask.sizeof.sizeof(s) for s in data.states
            )
