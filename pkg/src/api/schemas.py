from pydantic import BaseModel, Field
from typing import Dict, List, Literal, Optional


class MPLawRequest(BaseModel):
    sigmas: List[float] = Field(..., min_length=1)  # non-spiked population eigenvalues
    n: int = Field(..., ge=1)
    quantiles: bool = True


class MPLawResponse(BaseModel):
    p: int
    n: int
    edges: List[float]
    companions: List[float]
    bulk_counts: List[int]
    lambda_plus: float
    lambda_minus: float
    quantiles: Optional[List[float]] = None
    regularity: Dict[str, float]


class ShrinkerRequest(BaseModel):
    eigenvalues: List[float] = Field(..., min_length=1)  # sample eigenvalues, any order
    n: int = Field(..., ge=1)
    loss: str = "Frobenius"
    rank: Optional[int] = Field(None, ge=0)
    eps: Optional[float] = Field(None, gt=0)
    eta: Optional[float] = Field(None, ge=0)
    target: Literal["covariance", "precision"] = "covariance"


class ShrinkerResponse(BaseModel):
    loss: str
    rank: int
    target: str
    shrinkers: List[float]
    moments: Dict[str, List[float]]
    sigma_hat: List[float]
    spectrum_fallback: bool
    success: bool = True
