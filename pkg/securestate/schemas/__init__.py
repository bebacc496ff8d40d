# Scenario and report schemas
