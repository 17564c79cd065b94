from fastapi import APIRouter, HTTPException
import logging

import numpy as np

from ..errors import DomainError, ShrinkageError
from ..estimation.shrinkers import estimated_theta, fit_estimators
from ..mp_law.table import MPLawTable, find_edges
from ..shrinkage.losses import LossKind, shrinker_from_moments
from ..spectral.population import PopulationSpectrum, SampleSpectrum
from .schemas import MPLawRequest, MPLawResponse, ShrinkerRequest, ShrinkerResponse

logger = logging.getLogger(__name__)

router = APIRouter()


@router.post("/mp-law", response_model=MPLawResponse)
async def mp_law(request: MPLawRequest):
    """Edges, bulk counts and classical locations for a population spectrum"""
    try:
        spec = PopulationSpectrum.from_values(request.sigmas, request.n)
        table = MPLawTable.build(spec) if request.quantiles else find_edges(spec)
        report = table.regularity()
        return MPLawResponse(
            p=spec.p,
            n=spec.n,
            edges=table.edges.tolist(),
            companions=table.companions.tolist(),
            bulk_counts=table.bulk_counts.tolist(),
            lambda_plus=table.lambda_plus,
            lambda_minus=table.lambda_minus,
            quantiles=None if table.quantiles is None else table.quantiles.tolist(),
            regularity={k: float(v) for k, v in report.as_dict().items()},
        )
    except DomainError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except ShrinkageError as e:
        logger.error(f"MP law computation failed: {e}")
        raise HTTPException(status_code=500, detail=str(e))


@router.post("/shrinkers", response_model=ShrinkerResponse)
async def shrinkers(request: ShrinkerRequest):
    """Data-driven shrinkers for a set of sample eigenvalues"""
    try:
        loss = LossKind.parse(request.loss)
        sample = SampleSpectrum.from_eigenvalues(request.eigenvalues, request.n)
        r, est, st = fit_estimators(sample, r=request.rank, eta=request.eta)
        moments = {ell: estimated_theta(ell, sample, est, st, request.eps) for ell in loss.ell_set}
        phi = np.asarray(shrinker_from_moments(loss, moments))
        if request.target == "precision":
            if np.any(phi <= 0):
                raise DomainError("precision target needs positive shrinkers")
            phi = 1.0 / phi
        return ShrinkerResponse(
            loss=loss.value,
            rank=r,
            target=request.target,
            shrinkers=phi.tolist(),
            moments={ell.value: values.tolist() for ell, values in moments.items()},
            sigma_hat=est.sigma_hat.tolist(),
            spectrum_fallback=est.fallback,
        )
    except DomainError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except ShrinkageError as e:
        logger.error(f"Shrinker estimation failed: {e}")
        raise HTTPException(status_code=500, detail=str(e))
