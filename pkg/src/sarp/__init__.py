"""Scene-analysis-biased POMDP target search."""
